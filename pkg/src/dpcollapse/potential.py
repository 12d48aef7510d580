"""Newtonian mutual energy  U(f, g) = -G int int f(r) g(s) / |r - s|.

Three evaluation routes are provided: closed forms (balls, nuclear
lattices), direct O(N^2) cell-pair summation and zero-padded FFT
convolution.  Note the double integral carries no factor 1/2, so a
uniform ball has U(f, f) = -(6/5) G M^2 / R.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft
from scipy.signal import fftconvolve

from .constants import CUBE_SELF_COEFF, DEFAULT_CONSTANTS
from .density import (GranularBall, GridSpec, PointSet,
                      UniformBall, VoxelGrid)
from .errors import (CoincidentPoints, IncompatibleGrids, ResourceLimit,
                     SampleOutsideBall, SingularSelfEnergy, UnsupportedGeometry)

__all__ = [
    "EnergyResult", "ball_energy_shape", "ball_catness_shape",
    "mutual_energy_points", "mutual_energy_uniform_balls", "mutual_energy_lattices",
    "lattice_catness", "self_energy", "mutual_energy", "mutual_energy_grid",
    "grid_for", "grid_potential", "internal_field_profile",
]

#: default cap on cell pairs for the direct summation
DIRECT_PAIR_BUDGET = 2e9


@dataclass(frozen=True)
class EnergyResult:
    value: float
    method: str
    estimated_relative_error: float = 0.0
    grid_resolution: tuple = None

    def __post_init__(self):
        if self.estimated_relative_error < 0:
            raise ValueError("error estimate must be >= 0")


# ----------------------------------------------------------------------------
# closed forms
# ----------------------------------------------------------------------------

def ball_energy_shape(x):
    """-U R / (G M_a M_b) for two equal-radius balls at distance x R."""
    x = np.asarray(x, float)
    inner = 6 / 5 - x ** 2 / 2 + 3 * x ** 3 / 16 - x ** 5 / 160
    return np.where(x < 2, inner, 1 / np.maximum(x, 2))


def ball_catness_shape(x):
    """lG2 R / (G M^2) for a ball and its copy displaced by x R.

    Written out explicitly so that tiny displacements keep full precision.
    """
    x = np.asarray(x, float)
    inner = x ** 2 - 3 * x ** 3 / 8 + x ** 5 / 80
    return np.where(x < 2, inner, 2 * (6 / 5 - 1 / np.maximum(x, 2)))


def mutual_energy_points(A, B, constants=DEFAULT_CONSTANTS):
    """Pair sum -G sum_ij m_i m'_j / |r_i - r'_j| between two point sets."""
    if A is B or (A.positions.shape == B.positions.shape
                  and np.array_equal(A.positions, B.positions)):
        raise SingularSelfEnergy("self-energy of point masses is -infinity")
    d = np.linalg.norm(A.positions[:, None, :] - B.positions[None, :, :], axis=-1)
    if np.any(d == 0):
        raise CoincidentPoints("a point of A coincides with a point of B")
    U = -constants.G * float(A.masses @ (1.0 / d) @ B.masses)
    return EnergyResult(U, "analytic")


def mutual_energy_uniform_balls(a, b, constants=DEFAULT_CONSTANTS):
    d = float(np.linalg.norm(a.center - b.center))
    G, Ma, Mb = constants.G, a.total_mass, b.total_mass
    if math.isclose(a.radius, b.radius, rel_tol=1e-12):
        R = a.radius
        return EnergyResult(-G * Ma * Mb / R * float(ball_energy_shape(d / R)), "analytic")
    if d >= a.radius + b.radius:
        return EnergyResult(-G * Ma * Mb / d, "analytic")
    raise UnsupportedGeometry("overlapping balls of unequal radius")


def _lattice_difference_counts(idx_a, idx_b):
    """Counts of index differences n = i - j over i in A, j in B."""
    lo = np.minimum(idx_a.min(0), idx_b.min(0))
    hi = np.maximum(idx_a.max(0), idx_b.max(0))
    shape = tuple(hi - lo + 1)
    occ_a = np.zeros(shape)
    occ_b = np.zeros(shape)
    occ_a[tuple((idx_a - lo).T)] = 1
    occ_b[tuple((idx_b - lo).T)] = 1
    corr = np.rint(fftconvolve(occ_a, occ_b[::-1, ::-1, ::-1], mode="full"))
    nz = np.argwhere(corr > 0.5)
    counts = corr[tuple(nz.T)]
    n = nz - (np.array(shape) - 1)
    return n, counts


def _check_congruent(g1, g2):
    same = (math.isclose(g1.spacing, g2.spacing, rel_tol=1e-12)
            and math.isclose(g1.nucleus_radius, g2.nucleus_radius, rel_tol=1e-12)
            and math.isclose(g1.nucleus_density, g2.nucleus_density, rel_tol=1e-12))
    if not same:
        raise UnsupportedGeometry("lattice closed form needs identical nuclei and spacing")


def mutual_energy_lattices(g1, g2, constants=DEFAULT_CONSTANTS):
    """Exact U between two granular balls with identical nuclei.

    Each pair of nuclei interacts as two equal uniform balls, overlapping
    or not.
    """
    _check_congruent(g1, g2)
    n, c = _lattice_difference_counts(g1.lattice_indices, g2.lattice_indices)
    shift = (g1.center + g1.lattice_offset) - (g2.center + g2.lattice_offset)
    d = np.linalg.norm(n * g1.spacing + shift, axis=1)
    rn = g1.nucleus_radius
    U = -constants.G * g1.nucleus_mass ** 2 / rn * float(np.sum(c * ball_energy_shape(d / rn)))
    return EnergyResult(U, "analytic")


def lattice_catness(g, dx, constants=DEFAULT_CONSTANTS):
    """lG2 between a granular ball and its copy displaced by ``dx``.

    The displacement enters term by term in difference form, which keeps
    full relative precision for |dx| << r_n.
    """
    dx = np.asarray(dx, float).reshape(3)
    n, c = _lattice_difference_counts(g.lattice_indices, g.lattice_indices)
    L = n * g.spacing
    rn = g.nucleus_radius
    C = np.linalg.norm(L, axis=1)
    A = np.linalg.norm(L - dx, axis=1)
    diff = np.zeros(len(L))
    far = (C >= 2 * rn) & (A >= 2 * rn)
    # 1/C - 1/A over r_n units, for well separated nuclei
    num = (A[far] ** 2 - C[far] ** 2) / (A[far] + C[far])
    diff[far] = rn * num / (A[far] * C[far])
    zero = C == 0
    diff[zero] = ball_catness_shape(A[zero] / rn) / 2
    near = ~far & ~zero
    diff[near] = ball_energy_shape(C[near] / rn) - ball_energy_shape(A[near] / rn)
    lG2 = 2 * constants.G * g.nucleus_mass ** 2 / rn * float(np.sum(c * diff))
    return lG2


# ----------------------------------------------------------------------------
# grid machinery
# ----------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _kernel_spectrum(shape, h):
    """FFT of the 1/|r| kernel on the zero-padded (2n per axis) grid."""
    axes = []
    for n in shape:
        i = np.arange(2 * n)
        axes.append(np.where(i < n, i, i - 2 * n).astype(float))
    X, Y, Z = np.meshgrid(*axes, indexing="ij", sparse=True)
    r = np.sqrt(X * X + Y * Y + Z * Z)
    with np.errstate(divide="ignore"):
        K = 1.0 / (h * r)
    K[0, 0, 0] = CUBE_SELF_COEFF / h
    return fft.rfftn(K)


def grid_potential(masses, h, G=DEFAULT_CONSTANTS.G, workers=None):
    """Potential at cell centres generated by cell masses (isolated BCs)."""
    masses = np.asarray(masses, float)
    shape = masses.shape
    Kf = _kernel_spectrum(shape, float(h))
    padded = tuple(2 * n for n in shape)
    phi = fft.irfftn(fft.rfftn(masses, padded, workers=workers) * Kf, padded,
                     workers=workers)
    return -G * phi[:shape[0], :shape[1], :shape[2]]


def _grid_energy_fft(mf, mg, h, G, workers=None):
    phi = grid_potential(mf, h, G, workers)
    return float(np.sum(phi * mg))


def _grid_energy_direct(mf, mg, h, G, budget):
    idx_f = np.argwhere(mf > 0)
    idx_g = np.argwhere(mg > 0)
    if len(idx_f) * len(idx_g) > budget:
        raise ResourceLimit(f"{len(idx_f) * len(idx_g):.3g} cell pairs exceed budget {budget:.3g}")
    wf = mf[tuple(idx_f.T)]
    wg = mg[tuple(idx_g.T)]
    pg = idx_g.astype(float)
    total = 0.0
    block = max(1, int(2e7 // max(len(pg), 1)))
    for k in range(0, len(idx_f), block):
        pf = idx_f[k:k + block].astype(float)
        d2 = (np.sum(pf * pf, 1)[:, None] + np.sum(pg * pg, 1)[None, :]
              - 2 * pf @ pg.T)
        d2 = np.rint(d2)  # integer cell offsets: squared distances are integers
        with np.errstate(divide="ignore"):
            K = 1.0 / np.sqrt(d2)
        K[d2 == 0] = CUBE_SELF_COEFF
        total += float(wf[k:k + block] @ (K @ wg))
    return -G * total / h


def _common_masses(f, g):
    if not math.isclose(f.cell_size, g.cell_size, rel_tol=1e-12):
        raise IncompatibleGrids("grids have different cell sizes")
    if f.spec == g.spec:
        return f.masses, g.masses, f.spec
    lo = np.minimum(f.spec.lo, g.spec.lo)
    hi = np.maximum(f.spec.hi, g.spec.hi)
    h = f.cell_size
    n = np.rint((hi - lo) / h).astype(int)
    spec = GridSpec(tuple(lo), h, tuple(n))
    return f.cell_masses(spec), g.cell_masses(spec), spec


def mutual_energy_grid(f, g, method="fft", constants=DEFAULT_CONSTANTS,
                       pair_budget=DIRECT_PAIR_BUDGET, estimate_error=True, workers=None):
    """U between two voxel grids.

    The same-cell term uses the exact self-energy of a uniform cube; other
    cell pairs interact centre to centre.  The error estimate compares with
    the same computation on 2x coarsened grids.
    """
    mf, mg, spec = _common_masses(f, g)
    h, G = spec.cell_size, constants.G
    if method == "fft":
        U = _grid_energy_fft(mf, mg, h, G, workers)
    elif method == "direct":
        U = _grid_energy_direct(mf, mg, h, G, pair_budget)
    else:
        raise ValueError(f"unknown method {method!r}")
    err = 0.0
    if estimate_error and all(n % 2 == 0 and n >= 4 for n in spec.shape) and U != 0:
        cf = VoxelGrid(spec.origin, h, mf / h ** 3).coarsened().masses
        cg = VoxelGrid(spec.origin, h, mg / h ** 3).coarsened().masses
        Uc = _grid_energy_fft(cf, cg, 2 * h, G, workers)
        err = abs(U - Uc) / abs(U) / 3.0
    return EnergyResult(U, method, err, spec.shape)


def grid_for(dists, n=64, margin_cells=1):
    """Cubic-cell grid with ``n`` cells across the largest extent of the
    union of supports, padded by ``margin_cells``; dimensions are even."""
    lo = np.min([d.bounds()[0] for d in dists], axis=0)
    hi = np.max([d.bounds()[1] for d in dists], axis=0)
    h = float(np.max(hi - lo)) / n
    return GridSpec.covering(lo, hi, h, margin=margin_cells * h, even=True)


# ----------------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------------

def self_energy(dist, constants=DEFAULT_CONSTANTS, grid_n=64, method="fft"):
    """U(f, f) for any finite-self-energy model."""
    if isinstance(dist, PointSet):
        raise SingularSelfEnergy("self-energy of point masses is -infinity")
    if isinstance(dist, UniformBall):
        return EnergyResult(-6 / 5 * constants.G * dist.total_mass ** 2 / dist.radius,
                            "analytic")
    if isinstance(dist, GranularBall):
        return mutual_energy_lattices(dist, dist, constants)
    if isinstance(dist, VoxelGrid):
        return mutual_energy_grid(dist, dist, method, constants)
    grid = dist.to_grid(grid_for([dist], grid_n))
    return mutual_energy_grid(grid, grid, method, constants)


def mutual_energy(f, g, constants=DEFAULT_CONSTANTS, grid_n=64, method="fft"):
    """U(f, g) choosing the most accurate available route."""
    if isinstance(f, PointSet) and isinstance(g, PointSet):
        return mutual_energy_points(f, g, constants)
    if isinstance(f, UniformBall) and isinstance(g, UniformBall):
        try:
            return mutual_energy_uniform_balls(f, g, constants)
        except UnsupportedGeometry:
            pass
    if isinstance(f, GranularBall) and isinstance(g, GranularBall):
        try:
            return mutual_energy_lattices(f, g, constants)
        except UnsupportedGeometry:
            pass
    if isinstance(f, VoxelGrid) and isinstance(g, VoxelGrid):
        return mutual_energy_grid(f, g, method, constants)
    spec = grid_for([f, g], grid_n)
    return mutual_energy_grid(f.to_grid(spec), g.to_grid(spec), method, constants)


# ----------------------------------------------------------------------------
# interior field of a ball
# ----------------------------------------------------------------------------

def internal_field_profile(ball, radii, n=64, constants=DEFAULT_CONSTANTS,
                           validation=False):
    """Radial acceleration at distances ``radii`` from the centre along x.

    The ball is rasterized with ``n`` cells per diameter on an odd grid
    (a cell is centred on the ball centre); the FFT potential is
    differentiated by central differences and interpolated linearly.
    Expected inside: g(r) = -omega_G^2 r.
    """
    radii = np.atleast_1d(np.asarray(radii, float))
    if not validation and np.any(np.abs(radii) >= ball.radius):
        raise SampleOutsideBall("samples must lie inside the ball")
    h = 2 * ball.radius / n
    reach = max(ball.radius, float(np.max(np.abs(radii))))
    half = int(math.ceil(reach / h)) + 3
    m = 2 * half + 1
    origin = ball.center - (half + 0.5) * h
    spec = GridSpec(tuple(origin), h, (m, m, m))
    phi = grid_potential(ball.cell_masses(spec), h, constants.G)
    line = phi[:, half, half]
    x = (np.arange(m) - half) * h
    g = np.full(m, np.nan)
    g[1:-1] = -(line[2:] - line[:-2]) / (2 * h)
    ok = np.isfinite(g)
    acc = np.interp(radii, x[ok], g[ok])
    return list(zip(radii.tolist(), acc.tolist()))
