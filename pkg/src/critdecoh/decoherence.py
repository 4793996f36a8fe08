"""Decoherence factor from the two environment branches.

``d(t) = <phi_+(t)|phi_-(t)> = prod_k o_k(t)`` and ``D = |d|^2 = prod_k F_k`` with
``o_k = conj(u+) u- + conj(v+) v-`` and ``F_k = |o_k|^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from . import modes
from .modes import IntegratorConfig, ModeAmplitudes
from .quench import ISING, ModeGrid, QuenchSchedule, kz_scales

F_FLOOR = 1e-300
SINGULAR_F = 1e-12
DEFAULT_DG = 2.5e-3

LOW_K = "low-k excited"
ADIABATIC = "adiabatic"
HIGH_K = "high-k excited"


@dataclass(frozen=True)
class QubitState:
    c_plus: complex
    c_minus: complex

    def __post_init__(self):
        norm = abs(self.c_plus) ** 2 + abs(self.c_minus) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"qubit state not normalised: |c+|^2 + |c-|^2 = {norm!r}")


@dataclass
class ModeSnapshot:
    """Mode-resolved overlaps at one instant."""

    t: float
    g: float
    k: np.ndarray
    overlap: np.ndarray
    regime: np.ndarray
    delta: float = float("nan")
    tau_Q: float = float("nan")
    N: Optional[int] = None

    @property
    def F(self) -> np.ndarray:
        return np.abs(self.overlap) ** 2

    @property
    def entries(self):
        return list(zip(self.k.tolist(), self.F.tolist(), self.overlap.tolist(),
                        self.regime.tolist()))


@dataclass
class DecoherenceTrace:
    """Time series of the decoherence factor over a quench."""

    t: np.ndarray
    g: np.ndarray
    d: np.ndarray
    ln_D: np.ndarray
    singular: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def D(self) -> np.ndarray:
        return np.exp(self.ln_D)

    def __len__(self):
        return self.t.size

    def purity(self, q: QubitState) -> np.ndarray:
        """Tr rho_S^2 at every sample."""
        p2 = abs(q.c_plus) ** 2 * abs(q.c_minus) ** 2
        return 1.0 - 2.0 * p2 * (1.0 - np.abs(self.d) ** 2)


class ProductResult(NamedTuple):
    d: complex
    D: float
    ln_D: float
    singular: bool


class IntegralResult(NamedTuple):
    D: object
    ln_D: object
    error: float
    reliable: bool


def mode_overlap(plus: ModeAmplitudes, minus: ModeAmplitudes) -> complex:
    """``o_k = conj(u+) u- + conj(v+) v-`` for one mode at one instant."""
    if plus.k != minus.k:
        raise ValueError(f"momentum mismatch: {plus.k} vs {minus.k}")
    if not (plus.t == minus.t or (math.isnan(plus.t) and math.isnan(minus.t))):
        raise ValueError(f"time mismatch: {plus.t} vs {minus.t}")
    return plus.u.conjugate() * minus.u + plus.v.conjugate() * minus.v


def _log_product(overlaps, weight: float = 1.0):
    """Row-wise ``ln prod F`` and ``arg prod o`` over the last axis.

    Sums are exactly rounded (``math.fsum``), so the result does not depend on
    summation order.  Returns ``(ln_D, phase, singular)`` as arrays.
    """
    ov = np.atleast_2d(overlaps)
    F = np.abs(ov) ** 2
    singular = np.any(F < SINGULAR_F, axis=1)
    lnF = np.log(np.maximum(F, F_FLOOR))
    arg = np.angle(ov)
    ln_D = np.array([weight * math.fsum(row) for row in lnF])
    phase = np.array([weight * math.fsum(row) for row in arg])
    return ln_D, phase, singular


def decoherence_product(snapshot) -> ProductResult:
    """Exact finite-N decoherence factor from a snapshot (or an array of overlaps)."""
    ov = snapshot.overlap if isinstance(snapshot, ModeSnapshot) else np.asarray(snapshot)
    ov = np.asarray(ov, dtype=complex).reshape(-1)
    if isinstance(snapshot, ModeSnapshot) and snapshot.N is not None \
            and ov.size != snapshot.N // 2:
        raise ValueError("snapshot does not cover the full momentum grid")
    ln_D, phase, singular = _log_product(ov[None, :])
    ln_d = 0.5 * ln_D[0]
    d = complex(math.exp(ln_d) * math.cos(phase[0]), math.exp(ln_d) * math.sin(phase[0]))
    return ProductResult(d=d, D=math.exp(ln_D[0]), ln_D=float(ln_D[0]),
                         singular=bool(singular[0]))


def decoherence_integral(F: Callable, N: int, points: Optional[Sequence[float]] = None,
                         epsabs: float = 1e-10, workers=1) -> IntegralResult:
    """Thermodynamic-limit form ``D = exp(-(N/2pi) int_0^pi ln(1/F(k)) dk)``.

    ``F`` maps a scalar momentum to a scalar or a 1-D array (one value per
    time).  Adaptive Gauss-Kronrod quadrature (``scipy.integrate.quad_vec``)
    is used; ``reliable`` is False when the integrand met F below 1e-12 or the
    error estimate exceeded ``epsabs``.
    """
    hit_singular = False

    def integrand(k):
        nonlocal hit_singular
        f = np.asarray(F(k), dtype=float)
        if np.any(f < SINGULAR_F):
            hit_singular = True
        return -np.log(np.maximum(f, F_FLOOR))

    val, err = integrate.quad_vec(integrand, 0.0, math.pi, epsabs=epsabs, epsrel=0.0,
                                  norm="max", points=points, limit=10_000, workers=workers)
    return _integral_result(val, N, err, not hit_singular and err <= epsabs)


def decoherence_integral_batched(F: Callable, N: int, epsabs: float = 1e-8, order: int = 16,
                                 initial_panels: int = 16, max_rounds: int = 40
                                 ) -> IntegralResult:
    """Same integral by adaptive panel bisection with Gauss-Legendre panels.

    ``F`` must be vectorised: an array of momenta maps to an array whose last
    axis runs over momenta.  Each round evaluates the two halves of every
    unconverged panel in one call of ``F``, so an ODE-backed ``F`` integrates
    all nodes of a round in parallel.  A panel of width ``w`` is accepted once
    halving it changes its estimate by at most ``epsabs * w / pi``.
    """
    if order < 2 or initial_panels < 1:
        raise ValueError("need order >= 2 and initial_panels >= 1")
    x, w = special.roots_legendre(order)
    singular = False

    def panel_sums(a, b):
        nonlocal singular
        half = 0.5 * (b - a)
        ks = (a[:, None] + half[:, None] * (x[None, :] + 1.0)).ravel()
        f = np.asarray(F(ks), dtype=float)
        singular = singular or bool(np.any(f < SINGULAR_F))
        g = -np.log(np.maximum(f, F_FLOOR))
        g = g.reshape(g.shape[:-1] + (a.size, order))
        return np.moveaxis(g @ w * half, -1, 0)  # (panels, ...)

    edges = np.linspace(0.0, math.pi, initial_panels + 1)
    a, b = edges[:-1], edges[1:]
    coarse = panel_sums(a, b)
    total, err = 0.0, 0.0
    for _ in range(max_rounds):
        m = 0.5 * (a + b)
        halves = panel_sums(np.concatenate([a, m]), np.concatenate([m, b]))
        left, right = halves[:a.size], halves[a.size:]
        fine = left + right
        diff = np.abs(fine - coarse).reshape(a.size, -1).max(axis=1)
        done = diff <= epsabs * (b - a) / math.pi
        total = total + fine[done].sum(axis=0)
        err += float(diff[done].sum())
        if done.all():
            break
        keep = ~done
        a, m, b = a[keep], m[keep], b[keep]
        coarse = np.concatenate([left[keep], right[keep]])
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
    else:
        total = total + fine[~done].sum(axis=0)
        err += float(diff[~done].sum())
        return _integral_result(total, N, err, False)
    return _integral_result(total, N, err, not singular)


def _integral_result(val, N, err, reliable) -> IntegralResult:
    ln_D = -N / (2.0 * math.pi) * np.asarray(val)
    ln_D = float(ln_D) if ln_D.ndim == 0 else ln_D
    return IntegralResult(D=np.exp(ln_D), ln_D=ln_D, error=float(err), reliable=bool(reliable))


class ExactOverlap:
    """``F(k)`` at fixed times obtained by integrating the mode equations at that k.

    Independent of any momentum grid; suitable as the integrand of
    :func:`decoherence_integral`.
    """

    def __init__(self, schedule: QuenchSchedule, delta: float, cfg: IntegratorConfig,
                 times):
        self.schedule = schedule
        self.delta = delta
        self.cfg = cfg
        self.times = np.ascontiguousarray(times, dtype=float)
        self.calls = 0

    def __call__(self, k):
        """Scalar ``k`` gives shape ``(n_t,)``; an array gives ``(n_t, len(k))``."""
        ks = np.clip(np.asarray(k, dtype=float), 1e-12, math.pi - 1e-12)
        self.calls += 1
        ov, _ = modes.branch_overlaps(ks.reshape(-1), self.schedule, self.delta, self.cfg,
                                      self.times)
        F = np.abs(ov) ** 2
        return F[:, 0] if ks.ndim == 0 else F


def snapshot_function(snapshot: ModeSnapshot) -> Callable:
    """Cubic interpolant of ``ln F_k`` built from a snapshot, returned as ``k -> F``."""
    spline = CubicSpline(snapshot.k, np.log(np.maximum(snapshot.F, F_FLOOR)))
    return lambda k: np.minimum(np.exp(spline(k)), 1.0)


def reduced_density_matrix(q: QubitState, d: complex) -> np.ndarray:
    """Qubit density matrix in the {up, down} basis for decoherence factor ``d``."""
    if abs(d) > 1.0 + 1e-12:
        raise ValueError(f"|d| = {abs(d)} exceeds 1")
    off = q.c_plus.conjugate() * q.c_minus * d
    return np.array([[abs(q.c_plus) ** 2, off.conjugate()],
                     [off, abs(q.c_minus) ** 2]], dtype=complex)


def regime_tags(ks, g: float, tau_Q: float) -> np.ndarray:
    """Presentational sector labels: which crossings have excited each mode."""
    ks = np.asarray(ks, dtype=float)
    cut = 4.0 * kz_scales(ISING, tau_Q).k_hat
    tags = np.full(ks.shape, ADIABATIC, dtype=object)
    if g < 1.0:
        tags[ks < cut] = LOW_K
    if g < -1.0:
        tags[ks > math.pi - cut] = HIGH_K
    return tags


def sample_fields(schedule: QuenchSchedule, dg: float = DEFAULT_DG) -> np.ndarray:
    """Fields ``g_start, g_start - dg, ...`` down to ``g_end`` (inclusive when commensurate)."""
    if not dg > 0:
        raise ValueError("dg must be positive")
    n = int(math.floor((schedule.g_start - schedule.g_end) / dg + 1e-9))
    return schedule.g_start - dg * np.arange(n + 1)


def subsampled_modes(grid: ModeGrid, every: int = 1) -> np.ndarray:
    """Every ``every``-th momentum, centred in its block so the sum stays a midpoint rule."""
    if every < 1:
        raise ValueError("subsample factor must be >= 1")
    return grid.momenta[(every - 1) // 2::every]


def run_quench(schedule: QuenchSchedule, delta: float, grid: ModeGrid,
               cfg: IntegratorConfig = IntegratorConfig(), sample_times=None,
               snapshot_g: Sequence[float] = (), subsample: int = 1, dg: float = DEFAULT_DG):
    """Evolve both branches for every mode and assemble D(t).

    ``sample_times`` defaults to fields spaced ``dg`` apart.  With
    ``subsample = m > 1`` only every m-th mode is integrated and ``ln D`` is
    the corresponding coarse midpoint estimate of the momentum integral.

    Returns ``(trace, snapshots)``; snapshots follow the order of ``snapshot_g``.
    """
    if sample_times is None:
        sample_times = schedule.time_at(sample_fields(schedule, dg))
    sample_times = np.asarray(sample_times, dtype=float)
    snap_times = np.asarray([schedule.time_at(g) for g in snapshot_g], dtype=float)
    all_times = np.union1d(sample_times, snap_times)
    ks = subsampled_modes(grid, subsample)

    overlaps, drift = modes.branch_overlaps(ks, schedule, delta, cfg, all_times)

    rows = np.searchsorted(all_times, sample_times)
    ln_D, phase, singular = _log_product(overlaps[rows], weight=float(subsample))
    d = np.exp(0.5 * ln_D) * np.exp(1j * phase)
    trace = DecoherenceTrace(
        t=sample_times.copy(), g=schedule.field_at(sample_times), d=d, ln_D=ln_D,
        singular=singular,
        metadata=dict(N=grid.N, delta=delta, tau_Q=schedule.tau_Q,
                      g_start=schedule.g_start, g_end=schedule.g_end,
                      method=cfg.method, dt_max=cfg.step_for(schedule, delta),
                      subsample=subsample, n_modes=int(ks.size),
                      max_norm_drift=float(drift.max())),
    )
    snapshots = []
    for g, t in zip(snapshot_g, snap_times):
        ov = overlaps[np.searchsorted(all_times, t)].copy()
        snapshots.append(ModeSnapshot(
            t=float(t), g=float(g), k=ks.copy(), overlap=ov,
            regime=regime_tags(ks, g, schedule.tau_Q), delta=delta,
            tau_Q=schedule.tau_Q, N=grid.N if subsample == 1 else None))
    return trace, snapshots


def mode_snapshot(schedule: QuenchSchedule, delta: float, grid: ModeGrid, g: float,
                  cfg: IntegratorConfig = IntegratorConfig()) -> ModeSnapshot:
    """Single snapshot at field ``g`` without assembling a trace."""
    t = schedule.time_at(g)
    ov, _ = modes.branch_overlaps(grid.momenta, schedule, delta, cfg, [t])
    return ModeSnapshot(t=float(t), g=float(g), k=grid.momenta.copy(), overlap=ov[0],
                        regime=regime_tags(grid.momenta, g, schedule.tau_Q), delta=delta,
                        tau_Q=schedule.tau_Q, N=grid.N)
