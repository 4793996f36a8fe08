import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critdecoh.modes import (IntegrationError, IntegratorConfig, ModeAmplitudes, branch_overlaps,
                             evolve_branch, evolve_modes, excitation_probability,
                             ground_state_amplitudes)
from critdecoh.quench import CouplingSplit, QuenchSchedule

momenta = st.floats(1e-6, math.pi - 1e-6)
fields = st.floats(-20.0, 20.0)


def _bdg(k, g):
    a, b = 2 * (g - math.cos(k)), 2 * math.sin(k)
    return np.array([[a, b], [b, -a]])


@given(momenta, fields)
def test_ground_state_is_normalised_eigenvector(k, g):
    gs = ground_state_amplitudes(k, g)
    x = np.array([gs.u, gs.v])
    assert gs.norm == pytest.approx(1.0, abs=1e-14)
    H = _bdg(k, g)
    E = math.hypot(H[0, 0], H[0, 1])
    assert np.allclose(H @ x, E * x, atol=1e-12 * max(1.0, E))


def test_ground_state_limits():
    # the two paramagnetic limits are mirror images
    assert abs(ground_state_amplitudes(0.5, 1e6).u) == pytest.approx(1.0)
    assert abs(ground_state_amplitudes(0.5, -1e6).v) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ground_state_amplitudes(0.0, 1.0)


def test_excitation_probability_of_ground_state_is_zero():
    gs = ground_state_amplitudes(0.3, 2.0)
    assert excitation_probability(gs, 2.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("method", ["magnus4", "rk4", "dopri5"])
def test_adiabatic_mode_stays_in_ground_state(method):
    # large k: the gap never closes below ~2 sin k, so evolution is adiabatic
    s = QuenchSchedule(250.0)
    t = s.time_at(np.array([3.0, 0.0, -2.0]))
    cfg = IntegratorConfig(method=method, dt_max=0.002 if method == "rk4" else None)
    amps = evolve_branch(math.pi / 2, s, CouplingSplit(0.0), cfg, t)
    for a, g in zip(amps, (3.0, 0.0, -2.0)):
        assert excitation_probability(a, g) < 1e-6


@pytest.mark.parametrize("k", [0.01, 0.02, 0.04])
def test_landau_zener(k):
    s = QuenchSchedule(250.0)
    (a,) = evolve_branch(k, s, CouplingSplit(0.0), IntegratorConfig(), [s.time_at(-0.5)])
    p = excitation_probability(a, -0.5)
    assert p == pytest.approx(math.exp(-2 * math.pi * 250.0 * k * k), rel=0.05)


def test_methods_agree():
    s = QuenchSchedule(100.0, g_start=3.0, g_end=-3.0)
    ks = np.array([0.05, 0.3, 2.9])
    t = s.time_at(np.array([0.5, -2.0]))
    ref, _ = branch_overlaps(ks, s, 0.01, IntegratorConfig("dopri5"), t)
    for method in ("magnus4", "rk4"):
        ov, _ = branch_overlaps(ks, s, 0.01, IntegratorConfig(method, dt_max=0.005), t)
        assert np.allclose(ov, ref, atol=1e-6)


def test_magnus_is_unitary():
    s = QuenchSchedule(250.0)
    ks = np.linspace(0.01, 3.13, 50)
    _, _, drift = evolve_modes(ks, s, 0.01, IntegratorConfig(), [s.t_end])
    assert drift.max() < 1e-11


def test_rk4_norm_drift_is_reported():
    s = QuenchSchedule(250.0)
    with pytest.raises(IntegrationError) as err:
        evolve_modes([3.0], s, 0.0, IntegratorConfig("rk4", dt_max=0.05), [s.t_end])
    assert err.value.failures[0][3].startswith("norm drift")


def test_step_budget_failure_names_modes():
    s = QuenchSchedule(250.0)
    cfg = IntegratorConfig("magnus4", max_steps=10)
    with pytest.raises(IntegrationError) as err:
        branch_overlaps([0.1, 0.2], s, 0.01, cfg, [s.t_end])
    fails = err.value.failures
    assert {(f[0], f[2]) for f in fails} == {(0, 1), (0, -1), (1, 1), (1, -1)}
    assert "budget" in fails[0][3]


def test_branch_overlap_symmetric_and_trivial_at_zero_coupling():
    s = QuenchSchedule(50.0, g_start=2.0, g_end=-2.0)
    ks = np.array([0.1, 1.0])
    t = s.time_at(np.array([0.0, -1.5]))
    ov0, _ = branch_overlaps(ks, s, 0.0, IntegratorConfig(), t)
    assert np.allclose(ov0, 1.0, atol=1e-12)
    ovp, _ = branch_overlaps(ks, s, 0.01, IntegratorConfig(), t)
    ovm, _ = branch_overlaps(ks, s, -0.01, IntegratorConfig(), t)
    assert np.allclose(ovm, ovp.conj(), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.01, 3.1), min_size=1, max_size=6))
def test_modes_independent_of_batch(ks):
    # a mode's result must not depend on which other modes share the call
    s = QuenchSchedule(20.0, g_start=2.0, g_end=-2.0)
    t = [s.time_at(-1.5)]
    cfg = IntegratorConfig()
    batch, _ = branch_overlaps(ks, s, 0.01, cfg, t)
    single, _ = branch_overlaps(ks[:1], s, 0.01, cfg, t)
    assert batch[0, 0] == single[0, 0]


@pytest.mark.parametrize("bad", [[1.0, 0.5], [-2000.0], [5000.0], []])
def test_sample_time_validation(bad):
    s = QuenchSchedule(250.0)
    with pytest.raises(ValueError):
        evolve_modes([0.5], s, 0.0, IntegratorConfig(), bad)


@pytest.mark.parametrize("kwargs", [dict(method="euler"), dict(dt_max=0.0),
                                    dict(rel_tol=0.5), dict(abs_tol=0.0)])
def test_integrator_config_validation(kwargs):
    with pytest.raises(ValueError):
        IntegratorConfig(**kwargs)


def test_default_step_resolves_fastest_mode():
    s = QuenchSchedule(250.0)
    dt = IntegratorConfig().step_for(s, 0.01)
    omega = 2 * math.hypot(5.0 + 1.0 + 0.01, 1.0)
    assert dt * omega <= 0.25
    assert IntegratorConfig(dt_max=0.003).step_for(s) == 0.003


def test_large_momenta_stay_adiabatic_throughout():
    tau = 250.0
    s = QuenchSchedule(tau)
    k_hat = 1 / math.sqrt(tau)
    ks = np.linspace(10 * k_hat, math.pi - 10 * k_hat, 25)
    g = np.linspace(4.9, -2.9, 40)
    us, vs, _ = evolve_modes(ks, s, 0.0, IntegratorConfig(), s.time_at(g))
    for i, gi in enumerate(g):
        for j, k in enumerate(ks):
            a = ModeAmplitudes(complex(us[i, j]), complex(vs[i, j]), float(k), 1, 0.0)
            assert excitation_probability(a, gi) < 1e-3


@pytest.mark.parametrize("frac", [0.5, 0.25])
def test_landau_zener_final_probability(frac):
    tau = 250.0
    s = QuenchSchedule(tau)
    k = frac / math.sqrt(tau)
    (a,) = evolve_branch(k, s, CouplingSplit(0.0), IntegratorConfig(), [s.t_end])
    p = excitation_probability(a, s.g_end)
    assert p == pytest.approx(math.exp(-2 * math.pi * tau * k * k), rel=0.05)


def test_branch_symmetry_is_exact():
    s = QuenchSchedule(30.0)
    t = s.time_at(np.array([0.0, -2.0]))
    a = evolve_branch(0.2, s, CouplingSplit(0.01, 1), IntegratorConfig(), t)
    b = evolve_branch(0.2, s, CouplingSplit(-0.01, -1), IntegratorConfig(), t)
    assert [(x.u, x.v) for x in a] == [(x.u, x.v) for x in b]
