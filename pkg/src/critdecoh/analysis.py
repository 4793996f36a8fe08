"""Post-processing of quench runs.

Revival detection, regime classification, location of the frozen momentum
k_m in mode snapshots, and the power-law fit of the non-adiabatic decoherence
across quench times.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import analytic
from .decoherence import DecoherenceTrace, ModeSnapshot
from .quench import ISING, ModeGrid, k_m, kz_scales

REVIVALS = "revivals"
MONOTONIC = "monotonic"
MARGINAL = "marginal"


class NoPeriodError(ValueError):
    """Fewer than two revival peaks in the requested window."""


class InsufficientContrast(ValueError):
    pass


class FitWarning(UserWarning):
    pass


def classify_regime(delta: float, tau_Q: float) -> str:
    """Revivals between the critical points iff ``delta > pi/(16 tau_Q)``.

    Couplings within 1% of the threshold are reported as marginal.
    """
    if not (delta > 0 and tau_Q > 0):
        raise ValueError("delta and tau_Q must be positive")
    thr = analytic.revival_threshold(tau_Q)
    if abs(delta - thr) <= 0.01 * thr:
        return MARGINAL
    return REVIVALS if delta > thr else MONOTONIC


# --- revivals ----------------------------------------------------------------

@dataclass
class RevivalReport:
    peak_g: np.ndarray
    peak_D: np.ndarray
    mean_period_g: float
    predicted_period_g: float
    envelope_gap: float
    valid_peaks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def period_error(self) -> float:
        """Relative deviation of the measured from the predicted period."""
        return abs(self.mean_period_g - self.predicted_period_g) / self.predicted_period_g

    def to_dict(self) -> dict:
        return {
            "peak_g": [float(x) for x in self.peak_g],
            "peak_D": [float(x) for x in self.peak_D],
            "valid_peaks": [bool(x) for x in self.valid_peaks],
            "mean_period_g": self.mean_period_g,
            "predicted_period_g": self.predicted_period_g,
            "period_relative_error": self.period_error,
            "envelope_gap": self.envelope_gap,
        }


def quadratic_vertex(x, y):
    """Vertex of the parabola through three points."""
    (x0, x1, x2), (y0, y1, y2) = x, y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    c = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom
    xv = -b / (2.0 * a)
    return xv, c - b * b / (4.0 * a)


def local_maxima(x, y):
    """Interior local maxima of sampled data, refined by three-point parabolas.

    Returns ``(positions, heights)`` in the order the samples are given.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    idx = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    pos, height = [], []
    for i in idx:
        xv, yv = quadratic_vertex(x[i - 1:i + 2], y[i - 1:i + 2])
        pos.append(xv)
        height.append(yv)
    return np.array(pos), np.array(height)


def find_revivals(trace: DecoherenceTrace, window=(-0.9, 0.9),
                  validity: analytic.ValidityWindow = analytic.DEFAULT_WINDOW) -> RevivalReport:
    """Locate revival peaks of D(g) inside ``window`` and compare with theory.

    The envelope gap is measured against the finite-N ground-state fidelity
    at each peak, using only peaks inside the validity window.
    """
    meta = trace.metadata
    N, delta, tau_Q = meta["N"], meta["delta"], meta["tau_Q"]
    predicted = math.pi / (4.0 * tau_Q * abs(delta)) if delta else math.inf
    lo, hi = window
    sel = (trace.g > lo) & (trace.g < hi)
    g = trace.g[sel]
    D = trace.D[sel]
    if g.size > 1 and np.isfinite(predicted):
        per_period = predicted / np.median(np.abs(np.diff(g)))
        if per_period < 20:
            raise ValueError(
                f"trace too coarse: {per_period:.1f} samples per predicted period (need 20)")
    pos, height = local_maxima(g, D)
    order = np.argsort(pos)
    pos, height = pos[order], height[order]
    if pos.size < 2:
        raise NoPeriodError(f"found {pos.size} revival peak(s) in g window {window}")
    grid = ModeGrid(N)
    fid = np.array([math.exp(analytic.fidelity_product(grid.momenta, gp, delta)) for gp in pos])
    valid = validity.clear_of_both(pos, delta, tau_Q)
    gap = float(np.max(np.abs(height[valid] - fid[valid]))) if valid.any() else math.nan
    return RevivalReport(peak_g=pos, peak_D=height, mean_period_g=float(np.mean(np.diff(pos))),
                         predicted_period_g=predicted, envelope_gap=gap, valid_peaks=valid)


@dataclass
class GaussianFit:
    coefficient: float
    intercept: float
    predicted: float
    n_samples: int

    @property
    def relative_error(self) -> float:
        return abs(self.coefficient - self.predicted) / self.predicted


def fit_gaussian_decay(trace: DecoherenceTrace,
                       validity: analytic.ValidityWindow = analytic.DEFAULT_WINDOW) -> GaussianFit:
    """Least-squares fit of ``-ln(D / fidelity) = c t^2 + b`` between the critical points.

    Only samples inside the validity window are used; the finite-N
    ground-state fidelity is divided out first.
    """
    meta = trace.metadata
    N, delta, tau_Q = meta["N"], meta["delta"], meta["tau_Q"]
    sel = (np.abs(trace.g) < 1.0) & validity.clear_of_both(trace.g, delta, tau_Q)
    if sel.sum() < 3:
        raise ValueError("not enough valid samples between the critical points")
    ks = ModeGrid(N).momenta
    ln_fid = np.array([analytic.fidelity_product(ks, g, delta) for g in trace.g[sel]])
    y = -(trace.ln_D[sel] - ln_fid)
    x = trace.t[sel] ** 2
    c, b = np.polyfit(x, y, 1)
    return GaussianFit(coefficient=float(c), intercept=float(b),
                       predicted=analytic.gaussian_coefficient(N, delta, tau_Q),
                       n_samples=int(sel.sum()))


# --- frozen momentum -----------------------------------------------------------

@dataclass
class KmEstimate:
    k: float
    k_grid: float
    k_predicted: float
    spacing: float

    @property
    def offset_in_spacings(self) -> float:
        return abs(self.k - self.k_predicted) / self.spacing


def locate_km(snapshot: ModeSnapshot, sector: str = "low", refine: bool = True,
              validity: analytic.ValidityWindow = analytic.DEFAULT_WINDOW,
              min_contrast: float = 0.5) -> KmEstimate:
    """Momentum of the deepest KZ dip in a snapshot.

    ``sector="low"`` searches ``k < pi/4`` (first crossing, expects ``k_m``);
    ``sector="high"`` searches ``k > 3 pi/4`` (second crossing, expects
    ``pi - k_m``).  The dip must be resolvable: the relevant phase must satisfy
    ``sin^2 > min_contrast``.
    """
    delta, tau_Q = snapshot.delta, snapshot.tau_Q
    margin = validity.margin(delta, tau_Q)
    if sector == "low":
        if not snapshot.g < 1.0 - margin:
            raise ValueError(f"g={snapshot.g} is not past the first critical point")
        contrast = math.sin(analytic.phase_first(snapshot.t, delta)) ** 2
        sel = snapshot.k < math.pi / 4
        expected = k_m(tau_Q)
    elif sector == "high":
        if not snapshot.g < -1.0 - margin:
            raise ValueError(f"g={snapshot.g} is not past the second critical point")
        contrast = math.sin(analytic.phase_second(snapshot.t, tau_Q, delta)) ** 2
        sel = snapshot.k > 3 * math.pi / 4
        expected = math.pi - k_m(tau_Q)
    else:
        raise ValueError("sector must be 'low' or 'high'")
    if not contrast > min_contrast:
        raise InsufficientContrast(f"sin^2 of the phase is {contrast:.3f} <= {min_contrast}")

    k = snapshot.k[sel]
    F = snapshot.F[sel]
    i = int(np.argmin(F))
    k_best = float(k[i])
    if refine and 0 < i < k.size - 1:
        k_best = float(quadratic_vertex(k[i - 1:i + 2], F[i - 1:i + 2])[0])
    spacing = float(np.median(np.diff(snapshot.k)))
    return KmEstimate(k=k_best, k_grid=float(k[i]), k_predicted=float(expected), spacing=spacing)


# --- universal scaling -------------------------------------------------------

@dataclass
class ScalingFitResult:
    exponent: float
    exponent_err: float
    amplitude: float
    r_squared: float
    tau_Q_list: list
    residuals: list
    poor_fit: bool = False

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "exponent_err": self.exponent_err,
            "amplitude": self.amplitude,
            "r_squared": self.r_squared,
            "tau_Q_list": list(self.tau_Q_list),
            "residuals": list(self.residuals),
            "poor_fit": self.poor_fit,
            "predicted_exponent": -(ISING.r * ISING.nu / (1 + ISING.z * ISING.nu)),
        }


def excited_sector_factor(snapshot: ModeSnapshot) -> float:
    """``ln D_hat``: the decoherence carried by the KZ-excited modes only.

    Modes farther than ``4 k_hat`` from the gap-closing momenta of the
    crossings already passed are treated as adiabatic and left out, which
    divides the adiabatic contribution out of ``D`` numerically.
    """
    cut = 4.0 * kz_scales(ISING, snapshot.tau_Q).k_hat
    excited = np.zeros(snapshot.k.shape, dtype=bool)
    if snapshot.g < 1.0:
        excited |= snapshot.k < cut
    if snapshot.g < -1.0:
        excited |= snapshot.k > math.pi - cut
    lnF = np.log(np.maximum(snapshot.F[excited], 1e-300))
    return math.fsum(lnF)


def fit_scaling(runs: Sequence, matched_phase: Optional[float] = None,
                r2_min: float = 0.99) -> ScalingFitResult:
    """Fit ``ln(-ln D_hat) = ln A + slope * ln tau_Q``.

    ``runs`` holds ``(tau_Q, x)`` pairs where ``x`` is either ``ln D_hat`` (a
    negative float) or a :class:`ModeSnapshot` taken at the matched phase.
    For snapshots, ``matched_phase`` (when given) is checked against
    ``4 t delta``.  The slope estimates ``-r nu/(1 + z nu)``.
    """
    taus, ln_dhat = [], []
    for tau_Q, x in runs:
        if isinstance(x, ModeSnapshot):
            if matched_phase is not None:
                phi = analytic.phase_first(x.t, x.delta)
                if not math.isclose(phi, matched_phase, rel_tol=1e-9, abs_tol=1e-12):
                    raise ValueError(f"run at tau_Q={tau_Q} sampled at phase {phi}, "
                                     f"not {matched_phase}")
            x = excited_sector_factor(x)
        taus.append(float(tau_Q))
        ln_dhat.append(float(x))
    taus = np.array(taus)
    ln_dhat = np.array(ln_dhat)
    if taus.size < 4:
        raise ValueError(f"need at least 4 quench times, got {taus.size}")
    if taus.max() / taus.min() < 10.0:
        raise ValueError("quench times must span at least one decade")
    if np.any(ln_dhat >= 0):
        raise ValueError("every D_hat must be below 1")

    x = np.log(taus)
    y = np.log(-ln_dhat)
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    r2 = fit.rvalue ** 2
    poor = bool(r2 < r2_min)
    if poor:
        warnings.warn(f"poor scaling fit: R^2 = {r2:.4f}; residuals {np.round(resid, 4)}",
                      FitWarning, stacklevel=2)
    return ScalingFitResult(exponent=float(fit.slope), exponent_err=float(fit.stderr),
                            amplitude=float(math.exp(fit.intercept)), r_squared=float(r2),
                            tau_Q_list=taus.tolist(), residuals=resid.tolist(), poor_fit=poor)


DEFAULT_MATCHED_PHASE = math.pi / 8


def matched_phase_snapshot(tau_Q: float, N: int, matched_phase: float = DEFAULT_MATCHED_PHASE,
                           cfg=None, g_start: float = 5.0) -> ModeSnapshot:
    """Snapshot at g = 0 of a run whose coupling puts ``4 t delta`` at ``matched_phase`` there.

    The coupling is ``delta = matched_phase / (4 tau_Q)``; for
    ``matched_phase < pi/4`` this stays below the revival threshold.
    """
    from .decoherence import mode_snapshot
    from .modes import IntegratorConfig
    from .quench import QuenchSchedule

    schedule = QuenchSchedule(tau_Q, g_start=g_start, g_end=-3.0)
    delta = matched_phase / (4.0 * tau_Q)
    return mode_snapshot(schedule, delta, ModeGrid(N), 0.0, cfg or IntegratorConfig())
