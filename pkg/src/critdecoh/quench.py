"""Quench schedule, momentum grid and Kibble-Zurek scales.

Units: hbar = 1 and Ising coupling J = 1, so the environment Hamiltonian is
``H = -sum_j (sx_j sx_{j+1} + g(t) sz_j)`` and times are in units of 1/J.
The field is ramped down linearly, ``g(t) = g_c - t / tau_Q`` with g_c = 1,
so the chain crosses the critical points g = 1 (at t = 0) and g = -1
(at t = 2 tau_Q).

The Kibble-Zurek scales are only known up to O(1) prefactors; they are
computed here with unit prefactors unless overridden.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

G_CRITICAL = 1.0


@dataclass(frozen=True)
class QuenchSchedule:
    """Linear ramp ``g(t) = g_c - t/tau_Q`` run from ``g_start`` down to ``g_end``.

    A full run crosses both critical points; pass ``partial=True`` to allow a
    window that does not.
    """

    tau_Q: float
    g_start: float = 5.0
    g_end: float = -3.0
    g_c: float = G_CRITICAL
    partial: bool = False

    def __post_init__(self):
        if not self.tau_Q > 0:
            raise ValueError(f"tau_Q must be positive, got {self.tau_Q}")
        if not self.g_start > self.g_end:
            raise ValueError("g_start must exceed g_end (the field is ramped down)")
        if not self.partial and not (self.g_start > 1.0 and self.g_end < -1.0):
            raise ValueError(
                "a full run needs g_start > 1 > -1 > g_end; pass partial=True otherwise"
            )

    def field_at(self, t):
        return field_at(self, t)

    def time_at(self, g):
        return time_at(self, g)

    @property
    def t_start(self) -> float:
        return time_at(self, self.g_start)

    @property
    def t_end(self) -> float:
        return time_at(self, self.g_end)


def field_at(schedule: QuenchSchedule, t):
    """Field g at time t (scalar or array)."""
    return schedule.g_c - t / schedule.tau_Q


def time_at(schedule: QuenchSchedule, g):
    """Inverse of :func:`field_at`."""
    return (schedule.g_c - g) * schedule.tau_Q


@dataclass(frozen=True)
class CouplingSplit:
    """Qubit-environment coupling; branch ``s`` evolves in the field ``g(t) + s*delta``."""

    delta: float
    branch_sign: int = 1

    def __post_init__(self):
        if self.branch_sign not in (1, -1):
            raise ValueError("branch_sign must be +1 or -1")
        if not abs(self.delta) < 0.1:
            raise ValueError(f"|delta| must be < 0.1 (weak coupling), got {self.delta}")
        if abs(self.delta) > 0.05:
            warnings.warn(
                f"delta={self.delta} is outside the weak-coupling regime (> 0.05)",
                stacklevel=2,
            )

    @property
    def offset(self) -> float:
        """Shift of the effective field seen by this branch."""
        return self.branch_sign * self.delta

    def flipped(self) -> "CouplingSplit":
        return CouplingSplit(self.delta, -self.branch_sign)


@dataclass(frozen=True)
class ModeGrid:
    """Positive momenta ``k_s = (2s+1) pi / N`` for an even chain of N spins."""

    N: int
    momenta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {self.N}")
        ks = (2 * np.arange(self.N // 2) + 1) * np.pi / self.N
        ks.setflags(write=False)
        object.__setattr__(self, "momenta", ks)

    def __len__(self):
        return self.N // 2

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.N


@dataclass(frozen=True)
class UniversalityClass:
    z: float
    nu: float
    r: float
    delta0: float = 1.0
    xi0: float = 1.0

    def __post_init__(self):
        for name in ("z", "nu", "r", "delta0", "xi0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


# gap 2|g-1| and correlation length ~1/|g-1| near g_c = 1 for J = 1
ISING = UniversalityClass(z=1.0, nu=1.0, r=1.0, delta0=2.0, xi0=1.0)


@dataclass(frozen=True)
class KzScales:
    g_hat: float
    xi_hat: float
    k_hat: float


def kz_scales(uc: UniversalityClass, tau_Q: float, g_prefactor: float = 1.0,
              xi_prefactor: float = 1.0) -> KzScales:
    """Frozen-out field distance, length and momentum for a quench of time ``tau_Q``.

    The prefactors default to one; ``k_hat`` is always ``1/xi_hat``.
    """
    if not tau_Q > 0:
        raise ValueError("tau_Q must be positive")
    a = 1.0 + uc.z * uc.nu
    g_hat = g_prefactor * tau_Q ** (-1.0 / a)
    xi_hat = xi_prefactor * tau_Q ** (uc.nu / a)
    return KzScales(g_hat=g_hat, xi_hat=xi_hat, k_hat=1.0 / xi_hat)


def k_m(tau_Q):
    """Momentum of the mode dephasing most after the first crossing.

    It solves ``exp(-2 pi tau_Q k^2) = 1/2``, i.e. ``sqrt(ln 2 / (2 pi tau_Q))``.
    """
    tau_Q = np.asarray(tau_Q, dtype=float)
    if np.any(tau_Q <= 0):
        raise ValueError("tau_Q must be positive")
    out = math.sqrt(math.log(2.0) / (2.0 * math.pi)) / np.sqrt(tau_Q)
    return float(out) if out.ndim == 0 else out


def scaling_exponent(uc: UniversalityClass) -> float:
    """Exponent ``r nu / (1 + z nu)`` of ``-ln D_hat ~ N / tau_Q**exponent``."""
    return uc.r * uc.nu / (1.0 + uc.z * uc.nu)
