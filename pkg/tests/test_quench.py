import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from critdecoh.quench import (ISING, CouplingSplit, ModeGrid, QuenchSchedule,
                              UniversalityClass, k_m, kz_scales, scaling_exponent)


def test_schedule_crosses_critical_points_at_expected_times():
    s = QuenchSchedule(250.0)
    assert s.field_at(0.0) == 1.0
    assert s.field_at(500.0) == -1.0
    assert s.t_start == -1000.0 and s.t_end == 1000.0


@given(st.floats(1.0, 1e4), st.floats(-10, 10))
def test_field_time_roundtrip(tau, g):
    s = QuenchSchedule(tau)
    assert s.field_at(s.time_at(g)) == pytest.approx(g, abs=1e-9)


@pytest.mark.parametrize("kwargs", [
    dict(tau_Q=0.0), dict(tau_Q=-1.0), dict(tau_Q=10, g_start=-3, g_end=5),
    dict(tau_Q=10, g_start=0.5, g_end=-3), dict(tau_Q=10, g_start=5, g_end=-0.5),
])
def test_schedule_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        QuenchSchedule(**kwargs)


def test_partial_schedule_allowed_explicitly():
    assert QuenchSchedule(10, g_start=0.5, g_end=-0.5, partial=True).t_end == 15.0


def test_coupling_split():
    c = CouplingSplit(0.01)
    assert c.offset == 0.01 and c.flipped().offset == -0.01
    assert CouplingSplit(-0.02).offset == -0.02
    with pytest.raises(ValueError):
        CouplingSplit(0.1)
    with pytest.raises(ValueError):
        CouplingSplit(0.01, branch_sign=0)
    with pytest.warns(UserWarning):
        CouplingSplit(0.07)


@given(st.integers(2, 2000).map(lambda n: 2 * n))
def test_grid_momenta(N):
    g = ModeGrid(N)
    k = g.momenta
    assert len(g) == k.size == N // 2
    assert np.all((k > 0) & (k < math.pi))
    assert np.allclose(np.diff(k), g.spacing)
    # symmetric about pi/2: k and pi - k are both on the grid
    assert np.allclose(k + k[::-1], math.pi)


@pytest.mark.parametrize("N", [0, 2, 3, 7, 10.5])
def test_grid_rejects_bad_sizes(N):
    with pytest.raises(ValueError):
        ModeGrid(N)


def test_grid_is_read_only():
    with pytest.raises(ValueError):
        ModeGrid(8).momenta[0] = 1.0


def test_ising_kz_scales():
    s = kz_scales(ISING, 256.0)
    assert s.g_hat == pytest.approx(1 / 16)
    assert s.xi_hat == pytest.approx(16.0)
    assert s.k_hat == pytest.approx(1 / 16)
    assert scaling_exponent(ISING) == 0.5


@given(st.floats(1.0, 1e5))
def test_k_m_halves_landau_zener_probability(tau):
    assert math.exp(-2 * math.pi * tau * k_m(tau) ** 2) == pytest.approx(0.5)


def test_k_m_vectorised_and_validated():
    assert np.allclose(k_m([1.0, 4.0]), [k_m(1.0), k_m(1.0) / 2])
    with pytest.raises(ValueError):
        k_m(0.0)


def test_universality_class_validation():
    with pytest.raises(ValueError):
        UniversalityClass(z=0, nu=1, r=1)
    uc = UniversalityClass(z=2, nu=0.5, r=1)
    assert scaling_exponent(uc) == pytest.approx(0.25)


@given(st.floats(-1e4, 1e4), st.floats(1.0, 1e4))
def test_time_field_roundtrip(t, tau):
    s = QuenchSchedule(tau)
    assert s.time_at(s.field_at(t)) == pytest.approx(t, rel=1e-12, abs=1e-12 * tau)


@given(st.floats(1.0, 1e6), st.floats(1.01, 10.0))
def test_kz_scales_consistent_and_monotone(tau, factor):
    a, b = kz_scales(ISING, tau), kz_scales(ISING, tau * factor)
    assert a.k_hat * a.xi_hat == pytest.approx(1.0)
    assert b.g_hat < a.g_hat and b.k_hat < a.k_hat and b.xi_hat > a.xi_hat


@given(st.floats(1.0, 1e9))
def test_k_m_is_small_momentum(tau):
    assert k_m(tau) < math.pi / 4


@given(st.integers(2, 5000).map(lambda n: 2 * n))
def test_grid_extent(N):
    k = ModeGrid(N).momenta
    assert k[0] == pytest.approx(math.pi / N) and k[-1] == pytest.approx(math.pi - math.pi / N)
