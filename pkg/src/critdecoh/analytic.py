"""Closed-form approximations to the mode overlaps F_k and the decoherence factor D.

The formulas hold away from the critical points, ``|g - (+/-1)| >> delta, g_hat``.
Every public approximation returns an :class:`Estimate`, which holds the value
together with a boolean ``valid`` telling whether the inputs lie inside the
validity window.  Values outside the window are still computed so that curves
stay continuous when plotted.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate

from .quench import ISING, kz_scales

SQRT_LN2 = math.sqrt(math.log(2.0))
S_MAX = 6.0  # exp(-36) bounds the neglected tail of f[phi]


class Estimate(NamedTuple):
    value: object
    valid: object


@dataclass(frozen=True)
class ValidityWindow:
    """Require ``|g - g_c| > max(margin_delta*|delta|, margin_ghat*g_hat)`` at each critical point."""

    margin_delta: float = 5.0
    margin_ghat: float = 5.0

    def __post_init__(self):
        if self.margin_delta < 1 or self.margin_ghat < 1:
            raise ValueError("validity margins must be >= 1")

    def margin(self, delta: float, tau_Q: Optional[float] = None) -> float:
        m = self.margin_delta * abs(delta)
        if tau_Q is not None:
            m = max(m, self.margin_ghat * kz_scales(ISING, tau_Q).g_hat)
        return m

    def clear_of(self, g, g_c: float, delta: float, tau_Q: Optional[float] = None):
        return np.abs(np.asarray(g) - g_c) > self.margin(delta, tau_Q)

    def clear_of_both(self, g, delta: float, tau_Q: Optional[float] = None):
        return self.clear_of(g, 1.0, delta, tau_Q) & self.clear_of(g, -1.0, delta, tau_Q)


DEFAULT_WINDOW = ValidityWindow()


def _out(value, valid):
    value = np.asarray(value, dtype=float)
    valid = np.broadcast_to(np.asarray(valid, dtype=bool), value.shape)
    if value.ndim == 0:
        return Estimate(float(value), bool(valid))
    return Estimate(value, np.array(valid))


# --- adiabatic (ground-state) overlaps ---------------------------------------

def bogolubov_angle(k, g_eff):
    """Angle theta in [0, pi] of the instantaneous ground state at field ``g_eff``."""
    k = np.asarray(k, dtype=float)
    return np.arctan2(np.sin(k), np.cos(k) - g_eff)


def fk_adiabatic(k, g, delta, tau_Q=None, window: ValidityWindow = DEFAULT_WINDOW) -> Estimate:
    """Overlap of the two instantaneous ground states, ``cos^2((theta+ - theta-)/2)``."""
    dtheta = bogolubov_angle(k, g + delta) - bogolubov_angle(k, g - delta)
    value = np.cos(0.5 * dtheta) ** 2
    return _out(value, window.clear_of_both(g, delta, tau_Q))


def fk_adiabatic_expansion(k, g, delta):
    """Leading ``O(delta^2)`` form of :func:`fk_adiabatic`."""
    k = np.asarray(k, dtype=float)
    return 1.0 - delta ** 2 * np.sin(k) ** 2 / (1.0 - 2.0 * g * np.cos(k) + g ** 2) ** 2


def fidelity_product(ks, g, delta) -> float:
    """ln of the ground-state fidelity ``prod_k F_k^ad`` over the momenta ``ks``."""
    dtheta = bogolubov_angle(ks, g + delta) - bogolubov_angle(ks, g - delta)
    # ln cos^2(x) computed as log1p(-sin^2 x) keeps precision for tiny x
    return math.fsum(np.log1p(-np.sin(0.5 * dtheta) ** 2))


def fidelity_paramagnetic(N, delta, g, tau_Q=None,
                          window: ValidityWindow = DEFAULT_WINDOW) -> Estimate:
    """Thermodynamic-limit ground-state fidelity for ``|g| > 1``."""
    g = np.asarray(g, dtype=float)
    if np.any(np.abs(g) <= 1.0):
        raise ValueError("fidelity_paramagnetic needs |g| > 1")
    value = np.exp(-N * delta ** 2 / (4.0 * g ** 2 * (g ** 2 - 1.0)))
    return _out(value, window.clear_of_both(g, delta, tau_Q))


def fidelity_ferromagnetic(N, delta, g):
    """Thermodynamic-limit ground-state fidelity for ``|g| < 1`` (plain value)."""
    g = np.asarray(g, dtype=float)
    if np.any(np.abs(g) >= 1.0):
        raise ValueError("fidelity_ferromagnetic needs |g| < 1")
    out = np.exp(-N * delta ** 2 / (4.0 * (1.0 - g ** 2)))
    return float(out) if out.ndim == 0 else out


# --- phases ------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseFunctions:
    phi: float
    eta: float
    chi: Optional[float] = None


def phase_first(t, delta):
    """Relative phase picked up by low-k excitations after the first crossing."""
    return 4.0 * np.asarray(t, dtype=float) * delta


def phase_second(t, tau_Q, delta):
    """Relative phase of high-k excitations; zero at the second critical point."""
    g = 1.0 - np.asarray(t, dtype=float) / tau_Q
    return 4.0 * tau_Q * delta * (1.0 + g)


def chi_phase(k, t, tau_Q, delta):
    """Unreduced phase of the low-k excited amplitudes (cross-check for :func:`phase_first`).

    ``chi = (a_-^2 - a_+^2)/4 + tau'/4 ln(a_-/a_+)`` with
    ``a_pm = 2 sqrt(tau_Q)(cos k - g -/+ delta)`` and ``tau' = 4 tau_Q sin^2 k``.
    Only meaningful while both ``a_pm > 0``; NaN where they differ in sign.
    """
    k = np.asarray(k, dtype=float)
    g = 1.0 - np.asarray(t, dtype=float) / tau_Q
    a_p = 2.0 * math.sqrt(tau_Q) * (np.cos(k) - g - delta)
    a_m = 2.0 * math.sqrt(tau_Q) * (np.cos(k) - g + delta)
    tau_p = 4.0 * tau_Q * np.sin(k) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        return (a_m ** 2 - a_p ** 2) / 4.0 + tau_p * np.log(a_m / a_p) / 4.0


def phase_functions(t, tau_Q, delta, k=None) -> PhaseFunctions:
    chi = None if k is None else float(chi_phase(k, t, tau_Q, delta))
    return PhaseFunctions(phi=float(phase_first(t, delta)),
                          eta=float(phase_second(t, tau_Q, delta)), chi=chi)


# --- excited sectors -----------------------------------------------------------

def _kz_dip(q, tau_Q):
    x = np.exp(-2.0 * np.pi * tau_Q * np.asarray(q, dtype=float) ** 2)
    return 4.0 * (x - x * x)


def fk_excited_first(k, t, tau_Q, delta, window: ValidityWindow = DEFAULT_WINDOW) -> Estimate:
    """Low-k overlap after crossing g = 1."""
    value = 1.0 - _kz_dip(k, tau_Q) * np.sin(phase_first(t, delta)) ** 2
    g = 1.0 - np.asarray(t, dtype=float) / tau_Q
    valid = (g < 1.0 - window.margin(delta, tau_Q)) & (np.asarray(k) <= np.pi / 4)
    return _out(value, valid)


def fk_excited_second(k, t, tau_Q, delta, window: ValidityWindow = DEFAULT_WINDOW) -> Estimate:
    """High-k overlap after crossing g = -1."""
    k = np.asarray(k, dtype=float)
    value = 1.0 - _kz_dip(k - np.pi, tau_Q) * np.sin(phase_second(t, tau_Q, delta)) ** 2
    g = 1.0 - np.asarray(t, dtype=float) / tau_Q
    valid = (g < -1.0 - window.margin(delta, tau_Q)) & (np.pi - k <= np.pi / 4)
    return _out(value, valid)


# --- f[phi] --------------------------------------------------------------------

@lru_cache(maxsize=65536)
def _f_of(s2: float, c2: float) -> float:
    if s2 == 0.0:
        return 0.0

    def integrand(s):
        x = math.exp(-s * s)
        if s2 < 0.5:
            return -math.log1p(-4.0 * x * (1.0 - x) * s2)
        # same argument rewritten without cancellation near sin^2 phi = 1
        return -math.log((1.0 - 2.0 * x) ** 2 + 4.0 * x * (1.0 - x) * c2)

    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        # the log singularity (sin^2 phi = 1) sits at s = sqrt(ln 2): keep it on a panel edge
        for a, b in ((0.0, SQRT_LN2), (SQRT_LN2, S_MAX)):
            try:
                val, _ = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)
            except integrate.IntegrationWarning as exc:
                raise ArithmeticError(f"f[phi] quadrature did not converge: {exc}") from exc
            total += val
    return total / math.sqrt(2.0 * math.pi)


def f_integral(phi):
    """``f[phi] = -(2 pi)^(-1/2) int_0^inf ln[1 - 4(e^{-s^2} - e^{-2 s^2}) sin^2 phi] ds``.

    Depends on phi only through sin^2(phi); results are memoised on that value.
    """
    phi = np.asarray(phi, dtype=float)
    s2 = np.sin(phi) ** 2
    c2 = np.cos(phi) ** 2
    out = np.array([_f_of(float(a), float(b)) for a, b in zip(s2.ravel(), c2.ravel())])
    out = out.reshape(s2.shape)
    return float(out) if out.ndim == 0 else out


# --- decoherence factor --------------------------------------------------------

def _g_of(t, tau_Q):
    return 1.0 - np.asarray(t, dtype=float) / tau_Q


def decoherence_between(N, delta, tau_Q, t, window: ValidityWindow = DEFAULT_WINDOW) -> Estimate:
    """D between the critical points: ferromagnetic fidelity times the low-k KZ factor."""
    g = _g_of(t, tau_Q)
    ln_fid = -N * delta ** 2 / (4.0 * (1.0 - g ** 2))
    ln_kz = -N / (2.0 * np.pi) * f_integral(phase_first(t, delta)) / math.sqrt(tau_Q)
    margin = window.margin(delta, tau_Q)
    return _out(np.exp(ln_fid + ln_kz), (g > -1.0 + margin) & (g < 1.0 - margin))


def decoherence_after(N, delta, tau_Q, t, window: ValidityWindow = DEFAULT_WINDOW) -> Estimate:
    """D past the second critical point: paramagnetic fidelity times both KZ factors."""
    g = _g_of(t, tau_Q)
    ln_fid = -N * delta ** 2 / (4.0 * g ** 2 * (g ** 2 - 1.0))
    f_sum = f_integral(phase_first(t, delta)) + f_integral(phase_second(t, tau_Q, delta))
    ln_kz = -N / (2.0 * np.pi) * f_sum / math.sqrt(tau_Q)
    return _out(np.exp(ln_fid + ln_kz), g < -1.0 - window.margin(delta, tau_Q))


def revival_threshold(tau_Q):
    """Coupling ``pi/(16 tau_Q)`` separating revivals from monotonic decay."""
    return math.pi / (16.0 * tau_Q)


def gaussian_coefficient(N, delta, tau_Q):
    """Coefficient c of ``-ln D = c t^2`` in the weak-coupling regime."""
    return 8.0 * N * delta ** 2 * (math.sqrt(2.0) - 1.0) / (math.pi * math.sqrt(tau_Q))


def decoherence_gaussian(N, delta, tau_Q, t, window: ValidityWindow = DEFAULT_WINDOW) -> Estimate:
    """Small-phase expansion of :func:`decoherence_between`."""
    if abs(delta) >= revival_threshold(tau_Q):
        warnings.warn(
            f"delta={delta} is not below pi/(16 tau_Q)={revival_threshold(tau_Q):.4g}; "
            "the gaussian form does not apply in the revival regime", stacklevel=2)
    t = np.asarray(t, dtype=float)
    g = _g_of(t, tau_Q)
    ln_d = -gaussian_coefficient(N, delta, tau_Q) * t ** 2 - N * delta ** 2 / (4.0 * (1.0 - g ** 2))
    margin = window.margin(delta, tau_Q)
    return _out(np.exp(ln_d), (g > -1.0 + margin) & (g < 1.0 - margin))


def decoherence_analytic(N, delta, tau_Q, t, window: ValidityWindow = DEFAULT_WINDOW) -> Estimate:
    """Piecewise closed form over a whole run.

    Paramagnetic fidelity for g > 1, :func:`decoherence_between` for |g| < 1 and
    :func:`decoherence_after` for g < -1.  Exactly at g = +/-1 the value is NaN.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    g = _g_of(t, tau_Q)
    value = np.full(t.shape, np.nan)
    valid = np.zeros(t.shape, dtype=bool)
    before, between, after = g > 1.0, np.abs(g) < 1.0, g < -1.0
    if before.any():
        value[before], valid[before] = fidelity_paramagnetic(N, delta, g[before], tau_Q, window)
    if between.any():
        value[between], valid[between] = decoherence_between(N, delta, tau_Q, t[between], window)
    if after.any():
        value[after], valid[after] = decoherence_after(N, delta, tau_Q, t[after], window)
    if value.size == 1:
        return Estimate(float(value[0]), bool(valid[0]))
    return Estimate(value, valid)
