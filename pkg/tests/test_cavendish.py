import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpcollapse.cavendish import (CavendishScenario, IntegrationControls, LinearShuttle,
                                  Pendulum, Revolution, StepRemoval, detectability_report,
                                  effective_field, simulate_pendulum, source_acceleration,
                                  static_deflection)
from dpcollapse.constants import DEFAULT_CONSTANTS
from dpcollapse.density import GranularBall, UniformBall
from dpcollapse.errors import TimestepTooCoarse

G = DEFAULT_CONSTANTS.G
SRC = UniformBall.from_mass(100.0, 0.1)
PROBE = np.array([0.3, 0.0, 0.0])


def _step_scenario(tau, t0=10.0, t_end=None, dt=None, **kw):
    pend = Pendulum(0.01, 0.05, 0.5, tuple(PROBE))
    damp = 1 / (pend.zeta * pend.omega)
    t_end = t_end or t0 + 20 * max(tau, damp)
    dt = dt or min(2 * math.pi / pend.omega / 100, max(tau, damp) / 100, 1.0)
    return CavendishScenario(pend, SRC, StepRemoval((0, 0, 0), t0),
                             IntegrationControls(t_end, dt, **kw), emergence_time=tau)


def test_static_newton_force():
    a = effective_field(SRC, StepRemoval((0, 0, 0), 1e9), 0.0, 5.0, PROBE)
    np.testing.assert_allclose(a, [-G * 100.0 / 0.3 ** 2, 0, 0], rtol=1e-12)


def test_granular_source_field_matches_ball_far_away():
    g = GranularBall((0, 0, 0), 0.05, 0.01, nucleus_radius=1e-3, nucleus_density=1.0)
    a = source_acceleration(g, (0, 0, 0), (3.0, 0, 0))
    assert a[0] == pytest.approx(-G * g.total_mass / 9.0, rel=1e-3)


def test_step_removal_decays_by_e_after_tau():
    traj = StepRemoval((0, 0, 0), 10.0)
    before = effective_field(SRC, traj, 1.0, 9.0, PROBE)
    after = effective_field(SRC, traj, 1.0, 11.0, PROBE)
    assert after[0] / before[0] == pytest.approx(math.exp(-1), rel=0.01)
    assert np.all(effective_field(SRC, traj, 0.0, 10.5, PROBE) == 0)


def test_revolution_small_lag_phase():
    # linear response: phase lag atan(w tau) ~ w tau for w tau << 1
    period, tau, r = 200.0, 1.0, 1.0
    traj = Revolution(r, period)
    w = 2 * math.pi / period
    t = 10 * period
    a = effective_field(SRC, traj, tau, t, np.zeros(3))
    ang_true = math.atan2(*traj.position_at(t)[[1, 0]])
    ang = math.atan2(a[1], a[0])
    # the field at the centre points from the probe to the source
    lag = (ang_true - ang) % (2 * math.pi)
    assert lag == pytest.approx(math.atan(w * tau), rel=1e-3)
    assert lag == pytest.approx(w * tau, rel=0.01)


def test_static_fixed_point():
    pend = Pendulum(0.01, 0.05, 0.5, tuple(PROBE))
    sc2 = CavendishScenario(pend, SRC, StepRemoval((0, 0, 0), 1e6),
                            IntegrationControls(400.0, 1.0, start="rest"), emergence_time=0.0)
    rec = simulate_pendulum(sc2)
    expected = -G * 100.0 / (0.3 ** 2 * 0.05 ** 2)
    assert static_deflection(sc2) == pytest.approx(expected, rel=1e-12)
    # 10 damping times = 400 s
    assert rec.displacement[-1] == pytest.approx(expected, rel=0.01)


def test_settled_start_is_at_rest():
    rec = simulate_pendulum(_step_scenario(0.0, t0=1e6, t_end=50.0, dt=1.0))
    np.testing.assert_allclose(rec.displacement, rec.displacement[0], rtol=1e-12)


def test_zero_tau_self_lag():
    rec = simulate_pendulum(_step_scenario(0.0))
    assert rec.lag <= rec.t[1] - rec.t[0]
    assert rec.max_difference == 0.0


@pytest.mark.parametrize("tau", [1.0, 30.0])
def test_injected_lag_recovered(tau):
    rec = simulate_pendulum(_step_scenario(tau))
    assert rec.lag == pytest.approx(tau, rel=0.1)
    assert rec.effective_fraction[0] == 1.0


def test_lags_monotone_in_tau():
    sc = [_step_scenario(t, t_end=10 + 20 * 40.0, dt=1.0) for t in (1e-3, 1.0, 100.0)]
    lags = [simulate_pendulum(s).lag for s in sc]
    assert lags[0] < lags[1] < lags[2]


def test_detectability_floor():
    fam = [_step_scenario(t, t_end=10 + 20 * 40.0, dt=1.0) for t in (1.0, 1e-3)]
    table = detectability_report(fam, time_floor=1e-2)
    assert [r.tau for r in table] == [1e-3, 1.0]
    assert not table[0].detectable
    assert table[1].detectable
    threaded = detectability_report(fam, time_floor=1e-2, workers=2)
    assert [r.lag for r in threaded] == [r.lag for r in table]


def test_shuttle_phase_lag():
    pend = Pendulum(0.01, 0.05, 0.5, (0.5, 0.0, 0.0))
    traj = LinearShuttle((-0.1, 0, 0), (0.1, 0, 0), 400.0)
    sc = CavendishScenario(pend, SRC, traj, IntegrationControls(4000.0, 1.0), emergence_time=2.0)
    rec = simulate_pendulum(sc)
    assert rec.lag_method == "phase"
    assert rec.lag == pytest.approx(2.0, rel=0.1)


def test_timestep_guard():
    with pytest.raises(TimestepTooCoarse):
        simulate_pendulum(_step_scenario(1.0, dt=5.0))


def test_tau_from_collapse_time():
    sc = _step_scenario(1.0)
    from dataclasses import replace
    sc2 = replace(sc, emergence_time=None, collapse_time=3600.0, beta=0.5)
    assert sc2.tau == 1800.0
    with pytest.raises(ValueError):
        replace(sc, emergence_time=None).tau


def test_deterministic_rows():
    a = simulate_pendulum(_step_scenario(1.0)).rows(5)
    b = simulate_pendulum(_step_scenario(1.0)).rows(5)
    np.testing.assert_array_equal(a, b)


def test_dt_halving_converges():
    a = simulate_pendulum(_step_scenario(5.0, dt=0.5))
    b = simulate_pendulum(_step_scenario(5.0, dt=0.25))
    xa = np.interp(b.t, a.t, a.displacement)
    assert np.max(np.abs(xa - b.displacement)) <= 1e-3 * np.max(np.abs(b.displacement))


def test_instantaneous_limit():
    base = _step_scenario(0.0, t_end=200.0, dt=1.0)
    d1 = simulate_pendulum(base.with_tau(0.1)).max_difference
    d2 = simulate_pendulum(base.with_tau(0.05)).max_difference
    assert d2 / d1 == pytest.approx(0.5, abs=0.05)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(0.0, 30.0))
def test_step_field_closed_form(tau, s):
    traj = StepRemoval((0, 0, 0), 10.0)
    a0 = effective_field(SRC, traj, tau, 0.0, PROBE)
    a = effective_field(SRC, traj, tau, 10.0 + s, PROBE)
    assert a[0] == pytest.approx(a0[0] * math.exp(-s / tau), rel=1e-12)
    # the lagged field never exceeds the static one
    assert abs(a[0]) <= abs(a0[0])
