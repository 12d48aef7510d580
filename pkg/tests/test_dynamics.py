import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpcollapse.density import UniformBall
from dpcollapse.constants import PhysicalConstants
from dpcollapse.dynamics import (CollapseModelParams, GaussianMoments, cat_grid, cat_state,
                                 evolve_grid_stochastic, evolve_moments, gaussian_packet,
                                 relaxation_rate, scaled_universe_run, stationary_moments)
from dpcollapse.errors import GridUnderResolved, TimestepTooCoarse


def _params(lam=1.0, M=1.0, dt=1e-3, seed=0):
    return CollapseModelParams(lam, M, dt, seed)


def test_free_spreading_is_exact():
    M = 2.0
    s0 = GaussianMoments(0.0, 0.3, 0.5, 0.8, 0.1)
    tr = evolve_moments(_params(0.0, M, 1e-3), s0, 2.0, hbar=1.0)
    t = tr.t
    exact = s0.var_x + 2 * s0.cov_xp * t / M + s0.var_p * t * t / M ** 2
    np.testing.assert_allclose(tr.var_x, exact, rtol=1e-10)
    np.testing.assert_allclose(tr.mean_x, 0.3 * t / M, rtol=1e-12)


def test_stationary_state_is_fixed_point():
    p = _params(1.0, 1.0, 2e-3)
    st0 = stationary_moments(p, 1.0)
    assert st0.uncertainty_excess(1.0) >= -1e-9
    w = p.omega(1.0)
    tr = evolve_moments(p, st0, 10 / w, hbar=1.0)
    np.testing.assert_allclose(tr.var_x, st0.var_x, rtol=0.01)
    np.testing.assert_allclose(tr.var_p, st0.var_p, rtol=0.01)


def test_stationary_width_formula():
    p = _params(3.0, 2.0, 1e-3)
    st0 = stationary_moments(p, 1.0)
    w = p.omega(1.0)
    assert st0.var_x == pytest.approx(1.0 / (math.sqrt(8) * 2.0 * w), rel=1e-12)


@pytest.mark.parametrize("factor", [4.0, 0.25])
def test_attractor_from_wide_and_narrow(factor):
    p = _params(1.0, 1.0, 5e-4)
    st0 = stationary_moments(p, 1.0)
    tr = evolve_moments(p, GaussianMoments.minimum_uncertainty(factor * st0.var_x, 1.0),
                        8.0, hbar=1.0, stride=20)
    assert tr.var_x[-1] == pytest.approx(st0.var_x, rel=0.05)
    excess = [tr.at(i).uncertainty_excess(1.0) for i in range(len(tr.t))]
    assert min(excess) >= -1e-9


def test_timestep_halving():
    s0 = GaussianMoments.minimum_uncertainty(2.0, 1.0)
    a = evolve_moments(_params(1.0, 1.0, 2e-3), s0, 3.0, hbar=1.0).var_x[-1]
    b = evolve_moments(_params(1.0, 1.0, 1e-3), s0, 3.0, hbar=1.0).var_x[-1]
    assert abs(a - b) / b < 0.01


def test_timestep_too_coarse():
    with pytest.raises(TimestepTooCoarse):
        evolve_moments(_params(1.0, 1.0, 0.5), GaussianMoments.minimum_uncertainty(1.0, 1.0),
                       1.0, hbar=1.0)


def test_lambda_from_ball_matches_newton_frequency():
    C = PhysicalConstants(G=1.0, hbar=1.0)
    ball = UniformBall.from_mass(1.0, 1.0)
    p = CollapseModelParams.from_distribution(ball, 1e-3, C)
    w2 = 4 * math.pi * ball.density / 3
    assert p.lam == pytest.approx(1.0 * w2, rel=1e-3)


@pytest.mark.parametrize("d", [2.0, 6.0, 10.0, 20.0])
def test_cat_grid_passes_guards(d):
    x = cat_grid(d, 0.5)
    L = len(x) * (x[1] - x[0])
    assert abs(L - 2 * d) >= 12 * 0.5
    assert L >= d + 24 * 0.5
    assert 0.5 / (x[1] - x[0]) >= 16


def test_relaxation_rate_of_exponential():
    t = np.linspace(0, 10, 2001)
    assert relaxation_rate(t, 2 + np.exp(-1.7 * t), 2.0) == pytest.approx(1.7, rel=1e-3)


def _packet_grid(sigma, n=512, half=12.0):
    x = np.linspace(-half, half, n, endpoint=False)
    return x, gaussian_packet(x, 0.0, sigma, hbar=1.0)


def test_grid_single_packet_follows_moments():
    lam, M = 1.0, 1.0
    p = _params(lam, M, 2e-3, seed=4)
    x, psi = _packet_grid(1.0)
    ens = evolve_grid_stochastic(p, psi, x, 1.0, 64, 1.0, record_every=50)
    tr = evolve_moments(p, GaussianMoments.minimum_uncertainty(1.0, 1.0), 1.0, 1.0)
    assert ens.mean_var_x[-1] == pytest.approx(tr.var_x[-1], rel=0.02)
    # the conditional variance of a Gaussian is noise-free: no scatter
    assert ens.sem_var_x[-1] <= 1e-9 * ens.mean_var_x[-1]
    assert ens.max_norm_drift <= 1e-9


def test_grid_reproducible_from_seed():
    p = _params(1.0, 1.0, 2e-3, seed=9)
    x, psi = _packet_grid(1.0)
    a = evolve_grid_stochastic(p, psi, x, 0.1, 8, 1.0)
    b = evolve_grid_stochastic(p, psi, x, 0.1, 8, 1.0)
    np.testing.assert_array_equal(a.final_var_x, b.final_var_x)
    c = evolve_grid_stochastic(_params(1.0, 1.0, 2e-3, seed=10), psi, x, 0.1, 8, 1.0)
    assert not np.array_equal(a.final_var_x, c.final_var_x)


def test_cat_coherence_rate():
    lam, d, sigma = 10.0, 10.0, 0.5   # lam d^2 = 1e3
    x = cat_grid(d, sigma)
    T = 1.5 / (lam * d * d)
    p = _params(lam, 100.0, T / 150, seed=1)
    # the estimator scatters ~7% (1 sigma) at 200 realizations, ~2% at 2000
    ens = evolve_grid_stochastic(p, cat_state(x, d, sigma), x, T, 2000, 1.0,
                                 coherence_separation=d, record_every=5)
    assert ens.coherence_rate() == pytest.approx(lam * d * d, rel=0.05)


def test_cat_branches_are_balanced_and_collapsed():
    lam, d, sigma = 1.0, 10.0, 0.5
    x = cat_grid(d, sigma)
    n = 100
    p = _params(lam, 100.0, 0.01 / (lam * d * d), seed=2)
    ens = evolve_grid_stochastic(p, cat_state(x, d, sigma), x, 12 / (lam * d * d), n, 1.0,
                                 coherence_separation=d, record_every=100)
    single = np.maximum(ens.prob_left, 1 - ens.prob_left)
    assert np.all(single > 0.99)
    left = np.sum(ens.prob_left > 0.5)
    assert abs(left - n / 2) <= 3 * math.sqrt(n / 4)


def test_grid_guards():
    p = _params(1.0, 1.0, 1e-3)
    x = np.linspace(-10, 10, 64, endpoint=False)
    with pytest.raises(GridUnderResolved):
        evolve_grid_stochastic(p, gaussian_packet(x, 0, 0.5, hbar=1.0), x, 0.1, 2, 1.0)
    x = np.linspace(-3, 3, 1024, endpoint=False)
    with pytest.raises(GridUnderResolved):
        evolve_grid_stochastic(p, gaussian_packet(x, 0, 1.5, hbar=1.0), x, 0.1, 2, 1.0)
    x = np.linspace(-10, 10, 1024, endpoint=False)
    with pytest.raises(GridUnderResolved):
        # the pair's periodic image lands on the coherence lag
        evolve_grid_stochastic(p, cat_state(x, 10.0, 0.5), x, 0.1, 2, 1.0,
                               coherence_separation=10.0)
    x, psi = _packet_grid(1.0)
    with pytest.raises(TimestepTooCoarse):
        evolve_grid_stochastic(_params(1.0, 1.0, 1.0), psi, x, 1.0, 2, 1.0)


def test_scaled_universe_moment_sweep():
    rows = scaled_universe_run(masses=(1.0, 10.0, 100.0), hbar_factors=(1.0, 4.0),
                               stochastic=False, T_omega=6.0)
    rates = np.array([r.relaxation_rate for r in rows])
    assert np.ptp(rates) / rates.mean() < 0.2
    for r in rows:
        assert r.omega == pytest.approx(1.0, rel=1e-3)
        assert r.stationary_var == pytest.approx(r.var_wide, rel=0.05)
        assert r.stationary_var == pytest.approx(r.var_narrow, rel=0.05)
    v = {(r.hbar, r.mass): r.stationary_var for r in rows}
    h1, h4 = sorted({r.hbar for r in rows})
    # Var ~ hbar / M, so width ~ M^(-1/2) and ~ hbar^(1/2)
    assert math.sqrt(v[h1, 1.0] / v[h1, 100.0]) == pytest.approx(10.0, rel=0.1)
    assert math.sqrt(v[h4, 1.0] / v[h1, 1.0]) == pytest.approx(2.0, rel=0.1)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0), st.floats(0.05, 20.0))
def test_moment_flow_keeps_uncertainty(lam, M, factor):
    p = _params(lam, M, 1.0)
    st0 = stationary_moments(p, 1.0)
    s0 = GaussianMoments.minimum_uncertainty(factor * st0.var_x, 1.0)
    from dpcollapse.dynamics import _fastest_rate
    dt = 0.01 / max(_fastest_rate(p, s0.var_x, 1.0), _fastest_rate(p, st0.var_x, 1.0))
    p = _params(lam, M, dt)
    tr = evolve_moments(p, s0, 300 * dt, 1.0, stride=30)
    for i in range(len(tr.t)):
        assert tr.at(i).uncertainty_excess(1.0) >= -1e-9
        assert tr.var_x[i] > 0
