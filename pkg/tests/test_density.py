import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from dpcollapse.density import (CutoffPolicy, GranularBall, GridSpec, PointSet,
                                SmearedGranular, UniformBall, VoxelGrid, coarse_grain,
                                evaluate_density, lattice_mean_square_density,
                                read_voxel_grid, smearing_sweep, translate,
                                write_voxel_grid)
from dpcollapse.errors import GridTooCoarse, PointSetNotEvaluable, SupportNotCovered


def _ball():
    return UniformBall((0, 0, 0), 1.0, 1000.0)


def test_ball_density_inside_and_outside():
    b = _ball()
    assert evaluate_density(b, [0, 0, 0]) == 1000.0
    assert evaluate_density(b, [2.0, 0, 0]) == 0.0


def test_granular_vacuum_between_nuclei():
    g = GranularBall((0, 0, 0), 3.0, 1.0, nucleus_radius=0.1, nucleus_density=1.0)
    assert evaluate_density(g, [0.5, 0, 0]) == 0.0
    assert evaluate_density(g, [0, 0, 0]) == 1.0


def test_point_set_not_evaluable():
    with pytest.raises(PointSetNotEvaluable):
        evaluate_density(PointSet([[0, 0, 0]], [1.0]), [0, 0, 0])


def test_non_finite_point_rejected():
    with pytest.raises(ValueError):
        evaluate_density(_ball(), [np.nan, 0, 0])


def test_cell_masses_sum_to_total():
    b = _ball()
    spec = GridSpec.covering(*b.bounds(), 2 / 32, margin=0.1)
    assert b.cell_masses(spec).sum() == pytest.approx(b.total_mass, rel=1e-3)


def test_translate_identity_and_shift():
    b = _ball()
    same = translate(b, (0, 0, 0))
    np.testing.assert_array_equal(same.center, b.center)
    assert (same.radius, same.density) == (b.radius, b.density)
    t = translate(b, (0.3, 0, 0))
    assert isinstance(t, UniformBall)
    np.testing.assert_allclose(t.center, [0.3, 0, 0])
    assert t.total_mass == b.total_mass


def test_voxel_translate_non_integer_conserves_mass():
    spec = GridSpec.cube((0, 0, 0), 1.6, 32)
    g = _ball().to_grid(spec)
    moved = translate(g, (0.37 * spec.cell_size, -1.3 * spec.cell_size, 0))
    assert moved.total_mass == pytest.approx(g.total_mass, rel=1e-3)
    assert np.all(moved.density >= 0)


def test_point_mass_hard_sphere_smear():
    # a single mass smeared with a hard sphere becomes a ball of radius sigma
    sigma = 0.5
    pol = CutoffPolicy(sigma, kernel="hard_sphere")
    grid = GridSpec.cube((0, 0, 0), 2.0, 40)
    out = coarse_grain(PointSet([[0, 0, 0]], [2.0]), pol, grid)
    assert out.total_mass == pytest.approx(2.0, rel=1e-3)
    rho = 2.0 / (4 / 3 * math.pi * sigma ** 3)
    assert evaluate_density(out, [0.05, 0.05, 0.05]) == pytest.approx(rho, rel=0.1)
    assert evaluate_density(out, [0.8, 0, 0]) < 1e-12 * rho


def test_gaussian_smear_twice_is_wider_smear_once():
    # two passes at sigma compose to one pass at sqrt(2) sigma, not to the first pass
    sigma = 0.2
    grid = GridSpec.cube((0, 0, 0), 2.5, 64)
    # same cell size, 8 cells wider on each side for the second pass margin
    outer = GridSpec.cube((0, 0, 0), 3.125, 80)
    b = _ball()
    once = coarse_grain(b, CutoffPolicy(sigma), grid)
    twice = coarse_grain(once, CutoffPolicy(sigma), outer)
    wide = coarse_grain(b, CutoffPolicy(math.sqrt(2) * sigma), outer)
    assert twice.total_mass == pytest.approx(b.total_mass, rel=1e-3)
    peak = wide.density.max()
    assert np.max(np.abs(twice.density - wide.density)) <= 0.02 * peak
    inner = twice.density[8:-8, 8:-8, 8:-8]
    assert np.max(np.abs(inner - once.density)) > 0.05 * peak


def test_ball_small_smear_keeps_interior():
    pol = CutoffPolicy(0.1)
    grid = GridSpec.cube((0, 0, 0), 1.4, 56)
    out = coarse_grain(_ball(), pol, grid)
    assert out.total_mass == pytest.approx(_ball().total_mass, rel=1e-3)
    interior = out.density_at(grid.centers()[np.linalg.norm(grid.centers(), axis=-1) < 0.6])
    np.testing.assert_allclose(interior, 1000.0, rtol=0.01)


def test_coarse_grain_requires_resolution_and_margin():
    with pytest.raises(GridTooCoarse):
        coarse_grain(_ball(), CutoffPolicy(0.05), GridSpec.cube((0, 0, 0), 1.5, 20))
    with pytest.raises(SupportNotCovered):
        coarse_grain(_ball(), CutoffPolicy(0.1), GridSpec.cube((0, 0, 0), 1.1, 44))


def _direct_gaussian_sum(centers, nuclei, m, s):
    # oracle: sum of point Gaussians, no grid involved
    d2 = np.sum((centers[:, None, :] - nuclei[None, :, :]) ** 2, axis=-1)
    return m * np.exp(-d2 / (2 * s * s)).sum(axis=1) / (2 * math.pi * s * s) ** 1.5


def test_coarse_grain_lattice_matches_direct_convolution():
    # eight nuclei on a 2x2x2 lattice
    g = GranularBall((0, 0, 0), 1.0, 1.0, nucleus_radius=0.02, nucleus_density=1.0,
                     lattice_offset=(0.5, 0.5, 0.5))
    assert g.n_nuclei == 8
    s = 0.6
    grid = GridSpec.cube((0, 0, 0), 3.2, 64)
    out = coarse_grain(g, CutoffPolicy(s), grid)
    c = grid.centers().reshape(-1, 3)
    ref = _direct_gaussian_sum(c, g.nuclei, g.nucleus_mass, s)
    got = out.density.reshape(-1)
    near = np.linalg.norm(c, axis=1) < 0.5
    np.testing.assert_allclose(got[near], ref[near], rtol=0.02)
    assert out.total_mass == pytest.approx(g.total_mass, rel=1e-3)


def test_coarse_grain_lattice_large_smear_is_homogeneous():
    g = GranularBall((0, 0, 0), 6.0, 1.0, nucleus_radius=0.05, nucleus_density=1.0)
    s = 1.2
    grid = GridSpec.cube((0, 0, 0), 10.0, 40)
    out = coarse_grain(g, CutoffPolicy(s), grid)
    c = grid.centers()
    core = out.density[np.linalg.norm(c, axis=-1) < 1.5]
    np.testing.assert_allclose(core, g.mean_density, rtol=0.05)


def test_smearing_sweep_endpoints():
    g = GranularBall.desk_scale()
    a = g.spacing
    fam = smearing_sweep(g, [0.0, g.nucleus_radius, 10 * a])
    assert fam[0] is g
    narrow, wide = fam[1], fam[2]
    # s = r_n: peaks broaden below the nuclear density
    peak = narrow.density_at(np.array([g.nuclei[0]]))[0]
    assert 0 < peak < g.nucleus_density
    # s = 10 a: homogeneous interior
    pts = np.random.default_rng(0).uniform(-2, 2, (200, 3))
    vals = wide.density_at(pts)
    assert vals.max() / vals.mean() < 1.05


def test_smearing_sweep_rejects_unsorted():
    g = GranularBall.desk_scale()
    with pytest.raises(ValueError):
        smearing_sweep(g, [0.2, 0.1])
    with pytest.raises(ValueError):
        smearing_sweep(g, [-0.1])


def test_smeared_model_conserves_mass_on_grid():
    g = GranularBall.desk_scale()
    sm = SmearedGranular(g, 0.4)
    spec = GridSpec.covering(*sm.bounds(), 0.2, margin=0.2)
    assert sm.cell_masses(spec).sum() == pytest.approx(g.total_mass, rel=1e-3)


def test_mean_square_density_methods_agree():
    g = GranularBall.desk_scale()
    s = 0.3 * g.spacing
    real = lattice_mean_square_density(g, s, "real")
    rec = lattice_mean_square_density(g, s, "reciprocal")
    assert real == pytest.approx(rec, rel=1e-6)


def test_mean_square_density_homogeneous_limit():
    g = GranularBall.desk_scale()
    v = lattice_mean_square_density(g, 2 * g.spacing)
    assert v == pytest.approx(g.lattice_density ** 2, rel=1e-9)


def test_coarsen_preserves_mass():
    spec = GridSpec.cube((0, 0, 0), 1.2, 24)
    g = _ball().to_grid(spec)
    assert g.coarsened().total_mass == pytest.approx(g.total_mass, rel=1e-12)


def test_voxel_file_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    g = VoxelGrid((0.1, -0.2, 0.3), 0.05, rng.uniform(0, 5, (3, 4, 5)))
    p = tmp_path / "rho.bin"
    write_voxel_grid(g, p)
    back = read_voxel_grid(p)
    assert back.origin == g.origin and back.cell_size == g.cell_size
    np.testing.assert_array_equal(back.density, g.density)
    # x fastest on disk
    raw = np.fromfile(p, "<f8")
    assert raw[1] == g.density[1, 0, 0]


def test_voxel_rejects_negative():
    with pytest.raises(ValueError):
        VoxelGrid((0, 0, 0), 1.0, -np.ones((2, 2, 2)))


vec = st.tuples(*(st.floats(-2, 2) for _ in range(3)))


@settings(max_examples=50, deadline=None)
@given(vec, vec, vec)
def test_translation_property(a, b, r):
    ball = _ball()
    # stay clear of the surface where rounding decides the side
    assume(abs(np.linalg.norm(r) - ball.radius) > 1e-9)
    moved = translate(ball, a)
    assert evaluate_density(moved, np.add(r, a)) == evaluate_density(ball, r)
    assert moved.total_mass == ball.total_mass
    two = translate(translate(ball, a), b)
    np.testing.assert_allclose(two.center, np.add(a, b), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_voxel_translation_composition(a, b):
    rng = np.random.default_rng(3)
    g = VoxelGrid((0, 0, 0), 1.0, np.pad(rng.uniform(0, 1, (6, 6, 6)), 8))
    one = translate(g, (a + b, 0, 0))
    two = translate(translate(g, (a, 0, 0)), (b, 0, 0))
    assert one.total_mass == pytest.approx(g.total_mass, rel=1e-12)
    np.testing.assert_allclose(two.total_mass, one.total_mass, rtol=1e-12)
    assert np.all(two.density >= 0)
    # linear interpolation composes up to smoothing of order max cell density
    assert np.max(np.abs(one.density - two.density)) <= 0.5 * g.density.max()


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 0.3))
def test_coarse_grain_property(sigma):
    pol = CutoffPolicy(sigma)
    grid = GridSpec.cube((0, 0, 0), 2.2, 88)
    out = coarse_grain(_ball(), pol, grid)
    assert out.total_mass == pytest.approx(_ball().total_mass, rel=1e-3)
    assert np.all(out.density >= 0)
