"""Time evolution of single momentum modes on the two coupling branches."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .quench import CouplingSplit, QuenchSchedule

NORM_TOLERANCE = 1e-6

_METHODS = {"magnus4": _kernels.MAGNUS4, "rk4": _kernels.RK4, "dopri5": _kernels.DOPRI5}
_STATUS_TEXT = {
    _kernels.STEP_UNDERFLOW: "step-size underflow",
    _kernels.MAX_STEPS: "step budget exhausted",
}


class IntegrationError(RuntimeError):
    """Integration failed for one or more modes.

    ``failures`` is a list of ``(mode_index, k, branch_sign, reason)`` tuples.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        head = ", ".join(f"mode {i} (k={k:.6g}, branch {b:+d}): {r}"
                         for i, k, b, r in self.failures[:5])
        more = f" and {len(self.failures) - 5} more" if len(self.failures) > 5 else ""
        super().__init__(f"integration failed for {head}{more}")


@dataclass(frozen=True)
class ModeAmplitudes:
    u: complex
    v: complex
    k: float
    branch_sign: int
    t: float

    @property
    def norm(self) -> float:
        return abs(self.u) ** 2 + abs(self.v) ** 2


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator selection.

    ``magnus4`` (default) is a fourth-order exponential integrator and is
    unitary to round-off; ``rk4`` is classic fixed-step Runge-Kutta; ``dopri5``
    is adaptive Dormand-Prince 5(4) controlled by ``rel_tol``/``abs_tol``.
    ``dt_max=None`` picks a step from the largest mode frequency of the run.
    """

    method: str = "magnus4"
    dt_max: Optional[float] = None
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_steps: int = 50_000_000

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(_METHODS)}")
        if self.dt_max is not None and not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        for name in ("rel_tol", "abs_tol"):
            val = getattr(self, name)
            if not 0 < val < 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2), got {val}")

    def step_for(self, schedule: QuenchSchedule, delta: float = 0.0) -> float:
        if self.dt_max is not None:
            return float(self.dt_max)
        g_big = max(abs(schedule.g_start), abs(schedule.g_end))
        omega_max = 2.0 * math.hypot(g_big + 1.0 + abs(delta), 1.0)
        if self.method == "magnus4":
            return min(0.02, 0.25 / omega_max)
        # rk4 and the initial trial step of dopri5
        return min(0.01, 0.05 / omega_max)


def ground_state_amplitudes(k: float, g_eff: float, branch_sign: int = 1,
                            t: float = float("nan")) -> ModeAmplitudes:
    """Instantaneous ground state ``u = sin(theta/2), v = cos(theta/2)`` at field ``g_eff``."""
    if not 0.0 < k < math.pi:
        raise ValueError(f"k must lie strictly inside (0, pi), got {k}")
    u, v = _kernels.ground_state(float(k), float(g_eff))
    return ModeAmplitudes(u=u, v=v, k=float(k), branch_sign=branch_sign, t=t)


def excitation_probability(amps: ModeAmplitudes, g_eff: float) -> float:
    """Probability of *not* being in the instantaneous ground state at ``g_eff``."""
    gs = ground_state_amplitudes(amps.k, g_eff)
    overlap = gs.u.real * amps.u + gs.v.real * amps.v
    return float(min(1.0, max(0.0, 1.0 - abs(overlap) ** 2)))


def _check_times(schedule: QuenchSchedule, t_samples) -> np.ndarray:
    ts = np.ascontiguousarray(t_samples, dtype=float).reshape(-1)
    if ts.size == 0:
        raise ValueError("no sample times given")
    if np.any(np.diff(ts) < 0):
        raise ValueError("sample times must be sorted ascending")
    slack = 1e-9 * max(1.0, abs(schedule.t_start), abs(schedule.t_end))
    if ts[0] < schedule.t_start - slack or ts[-1] > schedule.t_end + slack:
        raise ValueError(
            f"sample times must lie in [{schedule.t_start}, {schedule.t_end}]"
        )
    return ts


def _check_momenta(ks) -> np.ndarray:
    ks = np.ascontiguousarray(ks, dtype=float).reshape(-1)
    if np.any(ks <= 0.0) or np.any(ks >= math.pi):
        raise ValueError("momenta must lie strictly inside (0, pi)")
    return ks


def _failures(ks, status, drift, signs):
    out = []
    for j in range(ks.size):
        for b, sign in enumerate(signs):
            st, dr = status[j, b], drift[j, b]
            if st != _kernels.OK:
                out.append((j, float(ks[j]), sign, _STATUS_TEXT[int(st)]))
            elif not dr < NORM_TOLERANCE:
                out.append((j, float(ks[j]), sign, f"norm drift {dr:.3g}"))
    return out


def evolve_modes(ks, schedule: QuenchSchedule, field_offset: float, cfg: IntegratorConfig,
                 t_samples):
    """Evolve many modes in the field ``g(t) + field_offset``.

    Returns ``(u, v, norm_drift)`` with ``u``/``v`` of shape
    ``(len(t_samples), len(ks))``.
    """
    ks = _check_momenta(ks)
    ts = _check_times(schedule, t_samples)
    dt = cfg.step_for(schedule, field_offset)
    us, vs, status, drift = _kernels.evolve_modes(
        ks, schedule.g_c + field_offset, float(schedule.tau_Q), schedule.t_start, ts,
        _METHODS[cfg.method], dt, cfg.rel_tol, cfg.abs_tol, cfg.max_steps)
    failed = _failures(ks, status[:, None], drift[:, None], (1,))
    if failed:
        raise IntegrationError(failed)
    return us, vs, drift


def evolve_branch(k: float, schedule: QuenchSchedule, coupling: CouplingSplit,
                  cfg: IntegratorConfig, t_samples: Sequence[float]) -> list[ModeAmplitudes]:
    """Amplitudes of mode ``k`` on one branch at each sample time.

    The mode starts in the ground state at ``g_start + offset``.
    """
    ts = _check_times(schedule, t_samples)
    us, vs, _ = evolve_modes([k], schedule, coupling.offset, cfg, ts)
    return [ModeAmplitudes(complex(us[i, 0]), complex(vs[i, 0]), float(k),
                           coupling.branch_sign, float(t)) for i, t in enumerate(ts)]


def branch_overlaps(ks, schedule: QuenchSchedule, delta: float, cfg: IntegratorConfig,
                    t_samples):
    """Overlaps ``o_k(t)`` between the +delta and -delta branches.

    Returns ``(overlaps, norm_drift)``; ``overlaps`` has shape
    ``(len(t_samples), len(ks))`` and ``norm_drift`` shape ``(len(ks), 2)``.
    Raises :class:`IntegrationError` naming every failed mode.
    """
    ks = _check_momenta(ks)
    ts = _check_times(schedule, t_samples)
    dt = cfg.step_for(schedule, delta)
    ov, status, drift = _kernels.overlap_modes(
        ks, schedule.g_c + delta, schedule.g_c - delta, float(schedule.tau_Q),
        schedule.t_start, ts, _METHODS[cfg.method], dt, cfg.rel_tol, cfg.abs_tol,
        cfg.max_steps)
    failed = _failures(ks, status, drift, (1, -1))
    if failed:
        raise IntegrationError(failed)
    return ov, drift
