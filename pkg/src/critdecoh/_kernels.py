"""Compiled per-mode integrators for the Bogolubov-de Gennes pair equations.

Each momentum mode obeys

    i du/dt =  A(t) u + B v
    i dv/dt = -A(t) v + B u,      A = 2 (g_eff(t) - cos k),  B = 2 sin k,

with ``g_eff(t) = g_base - t/tau_Q`` and ``g_base = g_c +/- delta``.  Modes are
independent, so the drivers below loop over them with ``prange``; a mode's
result depends only on its own inputs, never on scheduling.
"""
import math

import numpy as np
from numba import config, njit, prange

# prefer OpenMP; an outdated TBB otherwise triggers a warning on first parallel call
config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

MAGNUS4 = 0
RK4 = 1
DOPRI5 = 2

OK = 0
STEP_UNDERFLOW = 1
MAX_STEPS = 2

_SQRT3_6 = math.sqrt(3.0) / 6.0


@njit(cache=True)
def ground_state(k, g_eff):
    # theta in [0, pi] with cos(theta) = eps/sqrt(1+eps^2), eps = (cos k - g)/sin k;
    # atan2 keeps full precision when theta is close to 0 or pi
    theta = math.atan2(math.sin(k), math.cos(k) - g_eff)
    return complex(math.sin(0.5 * theta), 0.0), complex(math.cos(0.5 * theta), 0.0)


@njit(cache=True)
def _rhs(u, v, a, b):
    return -1j * (a * u + b * v), -1j * (b * u - a * v)


@njit(cache=True)
def _magnus4_step(u, v, cos_k, b, g_base, tau, t, h):
    # two-point Gauss Magnus; H = A sz + B sx, [H2, H1] = 2i B (A2 - A1) sy
    a1 = 2.0 * (g_base - (t + (0.5 - _SQRT3_6) * h) / tau - cos_k)
    a2 = 2.0 * (g_base - (t + (0.5 + _SQRT3_6) * h) / tau - cos_k)
    nx = h * b
    ny = _SQRT3_6 * h * h * b * (a2 - a1)
    nz = 0.5 * h * (a1 + a2)
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    c = math.cos(nn)
    s = math.sin(nn) / nn if nn > 0.0 else 1.0
    # exp(-i n.sigma) = cos|n| - i sin|n| (n/|n|).sigma
    nu = c * u - 1j * s * (nz * u + (nx - 1j * ny) * v)
    nv = c * v - 1j * s * ((nx + 1j * ny) * u - nz * v)
    return nu, nv


@njit(cache=True)
def _rk4_step(u, v, cos_k, b, g_base, tau, t, h):
    a0 = 2.0 * (g_base - t / tau - cos_k)
    am = 2.0 * (g_base - (t + 0.5 * h) / tau - cos_k)
    a1 = 2.0 * (g_base - (t + h) / tau - cos_k)
    k1u, k1v = _rhs(u, v, a0, b)
    k2u, k2v = _rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v, am, b)
    k3u, k3v = _rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v, am, b)
    k4u, k4v = _rhs(u + h * k3u, v + h * k3v, a1, b)
    return (u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))


@njit(cache=True)
def _dopri5_step(u, v, cos_k, b, g_base, tau, t, h):
    """One Dormand-Prince 5(4) step; returns the 5th-order state and the error estimate."""
    def a_of(tt):
        return 2.0 * (g_base - tt / tau - cos_k)

    k1u, k1v = _rhs(u, v, a_of(t), b)
    k2u, k2v = _rhs(u + h * (1 / 5 * k1u), v + h * (1 / 5 * k1v), a_of(t + h / 5), b)
    k3u, k3v = _rhs(u + h * (3 / 40 * k1u + 9 / 40 * k2u),
                    v + h * (3 / 40 * k1v + 9 / 40 * k2v), a_of(t + 3 * h / 10), b)
    k4u, k4v = _rhs(u + h * (44 / 45 * k1u - 56 / 15 * k2u + 32 / 9 * k3u),
                    v + h * (44 / 45 * k1v - 56 / 15 * k2v + 32 / 9 * k3v),
                    a_of(t + 4 * h / 5), b)
    k5u, k5v = _rhs(
        u + h * (19372 / 6561 * k1u - 25360 / 2187 * k2u + 64448 / 6561 * k3u - 212 / 729 * k4u),
        v + h * (19372 / 6561 * k1v - 25360 / 2187 * k2v + 64448 / 6561 * k3v - 212 / 729 * k4v),
        a_of(t + 8 * h / 9), b)
    k6u, k6v = _rhs(
        u + h * (9017 / 3168 * k1u - 355 / 33 * k2u + 46732 / 5247 * k3u
                 + 49 / 176 * k4u - 5103 / 18656 * k5u),
        v + h * (9017 / 3168 * k1v - 355 / 33 * k2v + 46732 / 5247 * k3v
                 + 49 / 176 * k4v - 5103 / 18656 * k5v),
        a_of(t + h), b)
    un = u + h * (35 / 384 * k1u + 500 / 1113 * k3u + 125 / 192 * k4u
                  - 2187 / 6784 * k5u + 11 / 84 * k6u)
    vn = v + h * (35 / 384 * k1v + 500 / 1113 * k3v + 125 / 192 * k4v
                  - 2187 / 6784 * k5v + 11 / 84 * k6v)
    k7u, k7v = _rhs(un, vn, a_of(t + h), b)
    e1, e3, e4 = 71 / 57600, -71 / 16695, 71 / 1920
    e5, e6, e7 = -17253 / 339200, 22 / 525, -1 / 40
    eu = h * (e1 * k1u + e3 * k3u + e4 * k4u + e5 * k5u + e6 * k6u + e7 * k7u)
    ev = h * (e1 * k1v + e3 * k3v + e4 * k4v + e5 * k5v + e6 * k6v + e7 * k7v)
    return un, vn, eu, ev


@njit(cache=True)
def integrate_mode(k, g_base, tau, t0, times, method, dt_max, rtol, atol, max_steps,
                   out_u, out_v):
    """Evolve one mode from its ground state at ``t0`` and record it at ``times``.

    Returns ``(status, max_norm_drift)``.  Fixed-step methods split each
    interval between consecutive recording times into equal steps no longer
    than ``dt_max``.
    """
    cos_k = math.cos(k)
    b = 2.0 * math.sin(k)
    u, v = ground_state(k, g_base - t0 / tau)
    t = t0
    drift = 0.0
    steps = 0
    h_try = dt_max
    for s in range(times.size):
        t_next = times[s]
        span = t_next - t
        if method == DOPRI5:
            while t_next - t > 0.0:
                h = min(h_try, dt_max, t_next - t)
                if h <= 1e-12 * max(1.0, abs(t)):
                    return STEP_UNDERFLOW, drift
                un, vn, eu, ev = _dopri5_step(u, v, cos_k, b, g_base, tau, t, h)
                su = atol + rtol * max(abs(u), abs(un))
                sv = atol + rtol * max(abs(v), abs(vn))
                err = max(abs(eu) / su, abs(ev) / sv)
                steps += 1
                if steps > max_steps:
                    return MAX_STEPS, drift
                if err <= 1.0:
                    t = t_next if h == t_next - t else t + h
                    u, v = un, vn
                    fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
                else:
                    fac = max(0.2, 0.9 * err ** -0.2)
                h_try = h * fac
        elif span > 0.0:
            n = int(math.ceil(span / dt_max))
            h = span / n
            for i in range(n):
                if method == MAGNUS4:
                    u, v = _magnus4_step(u, v, cos_k, b, g_base, tau, t + i * h, h)
                else:
                    u, v = _rk4_step(u, v, cos_k, b, g_base, tau, t + i * h, h)
            steps += n
            if steps > max_steps:
                return MAX_STEPS, drift
            t = t_next
        out_u[s] = u
        out_v[s] = v
        d = abs(u.real * u.real + u.imag * u.imag + v.real * v.real + v.imag * v.imag - 1.0)
        if d > drift:
            drift = d
    return OK, drift


@njit(cache=True, parallel=True)
def evolve_modes(ks, g_base, tau, t0, times, method, dt_max, rtol, atol, max_steps):
    m = ks.size
    n_t = times.size
    us = np.empty((n_t, m), dtype=np.complex128)
    vs = np.empty((n_t, m), dtype=np.complex128)
    status = np.zeros(m, dtype=np.int64)
    drift = np.zeros(m)
    for j in prange(m):
        bu = np.empty(n_t, dtype=np.complex128)
        bv = np.empty(n_t, dtype=np.complex128)
        st, dr = integrate_mode(ks[j], g_base, tau, t0, times, method, dt_max, rtol, atol,
                                max_steps, bu, bv)
        status[j] = st
        drift[j] = dr
        for s in range(n_t):
            us[s, j] = bu[s]
            vs[s, j] = bv[s]
    return us, vs, status, drift


@njit(cache=True, parallel=True)
def overlap_modes(ks, g_plus, g_minus, tau, t0, times, method, dt_max, rtol, atol, max_steps):
    """Branch overlaps ``conj(u+) u- + conj(v+) v-`` for every mode and time.

    Returns ``(overlaps[n_t, m], status[m, 2], drift[m, 2])``.
    """
    m = ks.size
    n_t = times.size
    ov = np.empty((n_t, m), dtype=np.complex128)
    status = np.zeros((m, 2), dtype=np.int64)
    drift = np.zeros((m, 2))
    for j in prange(m):
        pu = np.empty(n_t, dtype=np.complex128)
        pv = np.empty(n_t, dtype=np.complex128)
        mu = np.empty(n_t, dtype=np.complex128)
        mv = np.empty(n_t, dtype=np.complex128)
        st, dr = integrate_mode(ks[j], g_plus, tau, t0, times, method, dt_max, rtol, atol,
                                max_steps, pu, pv)
        status[j, 0] = st
        drift[j, 0] = dr
        st, dr = integrate_mode(ks[j], g_minus, tau, t0, times, method, dt_max, rtol, atol,
                                max_steps, mu, mv)
        status[j, 1] = st
        drift[j, 1] = dr
        for s in range(n_t):
            ov[s, j] = pu[s].conjugate() * mu[s] + pv[s].conjugate() * mv[s]
    return ov, status, drift
