"""Mass-density models, coarse-graining and translation.

Every distribution is immutable.  Analytic variants evaluate pointwise;
all variants can be rasterized onto a :class:`GridSpec`, returning cell
masses that sum to the total mass (up to the part of the support that
falls outside the grid).
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special
from scipy.signal import fftconvolve

from .constants import NUCLEAR_DENSITY, NUCLEUS_RADIUS, ATOMIC_RESOLUTION
from .errors import (GridTooCoarse, PointSetNotEvaluable, SupportNotCovered,
                     IncompatibleGrids)

__all__ = [
    "GridSpec", "CutoffPolicy", "PointSet", "UniformBall", "GranularBall",
    "SmearedGranular", "VoxelGrid", "evaluate_density", "coarse_grain",
    "translate", "smearing_sweep", "smeared_ball_profile",
    "lattice_mean_square_density", "read_voxel_grid", "write_voxel_grid",
]

_SQRT2 = math.sqrt(2.0)


def _vec(x):
    a = np.array(x, dtype=float).reshape(3)
    a.setflags(write=False)
    return a


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


# ----------------------------------------------------------------------------
# grids and policies
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Regular Cartesian grid; ``origin`` is the lower corner of cell (0,0,0)."""

    origin: tuple
    cell_size: float
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if self.cell_size <= 0 or min(self.shape) < 1:
            raise ValueError("cell_size must be positive and shape non-empty")

    @classmethod
    def covering(cls, lo, hi, cell_size, margin=0.0, even=False):
        lo = np.asarray(lo, float) - margin
        hi = np.asarray(hi, float) + margin
        n = np.maximum(np.ceil((hi - lo) / cell_size - 1e-9).astype(int), 1)
        if even:
            n += n % 2
        mid = 0.5 * (lo + hi)
        origin = mid - 0.5 * n * cell_size
        return cls(tuple(origin), float(cell_size), tuple(n))

    @classmethod
    def cube(cls, center, half_width, n):
        """``n`` cells per axis spanning ``center +- half_width``."""
        h = 2.0 * half_width / n
        origin = np.asarray(center, float) - half_width
        return cls(tuple(origin), h, (n, n, n))

    def axis_centers(self, axis):
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.cell_size

    def centers(self):
        """Cell-center coordinates, shape ``shape + (3,)``."""
        xs = [self.axis_centers(k) for k in range(3)]
        return np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1)

    @property
    def lo(self):
        return np.asarray(self.origin)

    @property
    def hi(self):
        return np.asarray(self.origin) + np.asarray(self.shape) * self.cell_size

    def covers(self, lo, hi, tol=1e-9):
        t = tol * self.cell_size
        return bool(np.all(self.lo <= np.asarray(lo) + t) and
                    np.all(self.hi >= np.asarray(hi) - t))


@dataclass(frozen=True)
class CutoffPolicy:
    """Spatial resolution rule applied before rate evaluation."""

    resolution: float
    kernel: str = "gaussian"
    mode: str = "custom"

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution length must be positive")
        if self.kernel not in ("gaussian", "hard_sphere"):
            raise ValueError(f"unknown smear kernel {self.kernel!r}")
        if self.mode not in ("nuclear", "atomic", "custom"):
            raise ValueError(f"unknown cutoff mode {self.mode!r}")

    @classmethod
    def nuclear(cls, kernel="gaussian"):
        return cls(NUCLEUS_RADIUS, kernel, "nuclear")

    @classmethod
    def atomic(cls, kernel="gaussian"):
        return cls(ATOMIC_RESOLUTION, kernel, "atomic")

    def kernel_weights(self, cell_size):
        """Kernel integrated over grid cells, normalized to unit sum."""
        return _kernel_weights(self.kernel, self.resolution, cell_size)


def _kernel_weights(kind, sigma, h):
    if kind == "gaussian":
        J = int(math.ceil(5.0 * sigma / h))
        j = np.arange(-J, J + 1)
        edges = (np.append(j - 0.5, J + 0.5)) * h / (_SQRT2 * sigma)
        w1 = np.diff(special.erf(edges)) * 0.5
        w1 /= w1.sum()
        w = w1[:, None, None] * w1[None, :, None] * w1[None, None, :]
    else:
        J = int(math.ceil(sigma / h))
        j = (np.arange(-J, J + 1)) * h
        w = _ball_fraction_on_centers(np.stack(np.meshgrid(j, j, j, indexing="ij"), -1),
                                      np.zeros(3), sigma, h)
    return w / w.sum()


# ----------------------------------------------------------------------------
# helpers: volume fractions and deposition
# ----------------------------------------------------------------------------

def _ball_fraction_on_centers(centers, c, R, h, sub=8):
    """Fraction of each cubic cell (side h, given centers) inside a ball."""
    d = np.linalg.norm(centers - c, axis=-1)
    half_diag = 0.5 * math.sqrt(3.0) * h
    frac = (d <= R - half_diag).astype(float)
    edge = np.abs(d - R) < half_diag
    if np.any(edge):
        t = (np.arange(sub) + 0.5) / sub - 0.5
        offs = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3) * h
        pts = centers[edge]
        inside = np.zeros(len(pts))
        for k in range(0, len(pts), 2048):
            p = pts[k:k + 2048, None, :] + offs[None, :, :]
            inside[k:k + 2048] = (np.sum((p - c) ** 2, axis=-1) <= R * R).mean(axis=1)
        frac[edge] = inside
    return frac


def _cic_deposit(spec, positions, masses):
    """Cloud-in-cell deposit of point masses; mass is conserved for
    points whose stencil lies inside the grid."""
    out = np.zeros(spec.shape)
    u = (np.asarray(positions, float) - spec.lo) / spec.cell_size - 0.5
    i0 = np.floor(u).astype(int)
    f = u - i0
    n = np.array(spec.shape)
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1 - f[:, 2]
                idx = i0 + (dx, dy, dz)
                ok = np.all((idx >= 0) & (idx < n), axis=1)
                np.add.at(out, tuple(idx[ok].T), (masses * wx * wy * wz)[ok])
    return out


def smeared_ball_profile(r, R, rho, s):
    """Density of a uniform ball (radius R, density rho) convolved with an
    isotropic Gaussian of standard deviation ``s``, at radius ``r``.

    Equivalently ``rho`` times the probability that a Gaussian centred at
    distance ``r`` lies inside the ball.
    """
    r = np.asarray(r, dtype=float)
    if s == 0:
        return np.where(r <= R, rho, 0.0)
    a = (R - r) / (_SQRT2 * s)
    b = (R + r) / (_SQRT2 * s)
    small = r < 1e-6 * s
    rs = np.where(small, 1.0, r)
    tail = s / (rs * math.sqrt(2 * math.pi)) * (np.exp(-a * a) - np.exp(-b * b))
    out = 0.5 * (special.erf(a) + special.erf(b)) - tail
    if np.any(small):
        z = R / (_SQRT2 * s)
        lim = special.erf(z) - 2 * z / math.sqrt(math.pi) * math.exp(-z * z)
        out = np.where(small, lim, out)
    return rho * np.clip(out, 0.0, 1.0)


# ----------------------------------------------------------------------------
# distributions
# ----------------------------------------------------------------------------

class MassDistribution:
    """Common interface of all density models."""

    variant = "abstract"

    @property
    def total_mass(self):
        raise NotImplementedError

    def bounds(self):
        """Axis-aligned (lo, hi) box containing the support."""
        raise NotImplementedError

    def density_at(self, points):
        raise NotImplementedError

    def translated(self, dx):
        raise NotImplementedError

    def cell_masses(self, spec):
        """Cell masses [kg] of the distribution on ``spec``."""
        raise NotImplementedError

    def to_grid(self, spec):
        return VoxelGrid(spec.origin, spec.cell_size,
                         self.cell_masses(spec) / spec.cell_size ** 3)

    def scaled(self, factor):
        raise NotImplementedError


@dataclass(frozen=True)
class PointSet(MassDistribution):
    positions: np.ndarray
    masses: np.ndarray
    variant = "PointSet"

    def __post_init__(self):
        pos = np.array(self.positions, float).reshape(-1, 3)
        m = np.array(self.masses, float).reshape(-1)
        if len(pos) != len(m):
            raise ValueError("positions and masses differ in length")
        if np.any(m < 0):
            raise ValueError("point masses must be non-negative")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "masses", _frozen(m))

    @property
    def total_mass(self):
        return float(np.sum(self.masses))

    def bounds(self):
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def density_at(self, points):
        raise PointSetNotEvaluable("a point set is a distribution, not a function")

    def translated(self, dx):
        return PointSet(self.positions + _vec(dx), self.masses)

    def scaled(self, factor):
        return PointSet(self.positions, self.masses * factor)

    def cell_masses(self, spec):
        return _cic_deposit(spec, self.positions, self.masses)


@dataclass(frozen=True)
class UniformBall(MassDistribution):
    center: np.ndarray
    radius: float
    density: float
    variant = "UniformBall"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if self.radius <= 0 or self.density < 0:
            raise ValueError("ball needs radius > 0 and density >= 0")

    @classmethod
    def from_mass(cls, mass, radius, center=(0, 0, 0)):
        return cls(center, radius, mass / (4.0 / 3.0 * math.pi * radius ** 3))

    @property
    def total_mass(self):
        return self.density * 4.0 / 3.0 * math.pi * self.radius ** 3

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def density_at(self, points):
        d = np.linalg.norm(np.asarray(points, float) - self.center, axis=-1)
        return np.where(d <= self.radius, self.density, 0.0)

    def translated(self, dx):
        return UniformBall(self.center + _vec(dx), self.radius, self.density)

    def scaled(self, factor):
        return UniformBall(self.center, self.radius, self.density * factor)

    def cell_masses(self, spec):
        frac = _ball_fraction_on_centers(spec.centers(), self.center, self.radius,
                                         spec.cell_size)
        return frac * self.density * spec.cell_size ** 3


@dataclass(frozen=True)
class GranularBall(MassDistribution):
    """Ball of radius R whose mass sits in small uniform nuclei placed on a
    simple cubic lattice.  Lattice sites are kept if the whole nucleus lies
    inside the ball."""

    center: np.ndarray
    radius: float
    spacing: float
    nucleus_radius: float = NUCLEUS_RADIUS
    nucleus_density: float = NUCLEAR_DENSITY
    lattice_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    variant = "GranularBall"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        object.__setattr__(self, "lattice_offset", _vec(self.lattice_offset))
        if self.spacing < 2 * self.nucleus_radius:
            raise ValueError("nuclei overlap: spacing must be >= 2 * nucleus_radius")
        if self.nucleus_radius <= 0 or self.nucleus_density < 0:
            raise ValueError("invalid nucleus parameters")
        if len(self.lattice_indices) == 0:
            raise ValueError("no lattice site fits inside the ball")

    @classmethod
    def desk_scale(cls, radius_in_spacings=5.3, density_ratio=1e4, spacing=1.0,
                   nucleus_density=1.0, center=(0, 0, 0)):
        """Lattice whose nuclear density exceeds the mean density of the
        homogenized ball by ``density_ratio``.

        The nucleus radius is chosen so that the real clipped nucleus count
        reproduces the ratio for the ball of the same radius and mass.
        """
        R = radius_in_spacings * spacing
        r_n = spacing * 1e-3
        for _ in range(50):
            n = len(_lattice_sites(np.zeros(3), R - r_n, spacing))
            new = R * (1.0 / (n * density_ratio)) ** (1.0 / 3.0)
            if abs(new - r_n) < 1e-14 * spacing:
                break
            r_n = new
        return cls(center, R, spacing, r_n, nucleus_density)

    @cached_property
    def lattice_indices(self):
        return _lattice_sites(self.lattice_offset, self.radius - self.nucleus_radius,
                              self.spacing)

    @property
    def nuclei(self):
        return self.center + self.lattice_offset + self.lattice_indices * self.spacing

    @property
    def n_nuclei(self):
        return len(self.lattice_indices)

    @property
    def nucleus_mass(self):
        return self.nucleus_density * 4.0 / 3.0 * math.pi * self.nucleus_radius ** 3

    @property
    def total_mass(self):
        return self.n_nuclei * self.nucleus_mass

    @property
    def mean_density(self):
        """Density of the homogeneous ball with the same mass and radius."""
        return self.total_mass / (4.0 / 3.0 * math.pi * self.radius ** 3)

    @property
    def lattice_density(self):
        """Mass per lattice cell volume."""
        return self.nucleus_mass / self.spacing ** 3

    def homogenized(self):
        return UniformBall(self.center, self.radius, self.mean_density)

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def density_at(self, points):
        p = np.asarray(points, float)
        rel = p - self.center - self.lattice_offset
        idx = np.rint(rel / self.spacing)
        site = idx * self.spacing
        near = np.linalg.norm(rel - site, axis=-1) <= self.nucleus_radius
        kept = (np.linalg.norm(site + self.lattice_offset, axis=-1)
                <= self.radius - self.nucleus_radius)
        return np.where(near & kept, self.nucleus_density, 0.0)

    def translated(self, dx):
        return GranularBall(self.center + _vec(dx), self.radius, self.spacing,
                            self.nucleus_radius, self.nucleus_density,
                            self.lattice_offset)

    def scaled(self, factor):
        return GranularBall(self.center, self.radius, self.spacing,
                            self.nucleus_radius, self.nucleus_density * factor,
                            self.lattice_offset)

    def cell_masses(self, spec):
        h = spec.cell_size
        pos = self.nuclei
        if self.nucleus_radius < h:
            return _cic_deposit(spec, pos, np.full(len(pos), self.nucleus_mass))
        out = np.zeros(spec.shape)
        w = int(math.ceil(self.nucleus_radius / h)) + 1
        for c in pos:
            i = np.floor((c - spec.lo) / h).astype(int)
            lo = np.maximum(i - w, 0)
            hi = np.minimum(i + w + 1, spec.shape)
            if np.any(hi <= lo):
                continue
            xs = [spec.axis_centers(k)[lo[k]:hi[k]] for k in range(3)]
            cen = np.stack(np.meshgrid(*xs, indexing="ij"), -1)
            frac = _ball_fraction_on_centers(cen, c, self.nucleus_radius, h)
            out[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] += frac
        # rescale so the deposited mass is exact despite sub-sampling
        vol = out.sum() * h ** 3
        expected = self.n_nuclei * 4.0 / 3.0 * math.pi * self.nucleus_radius ** 3
        if vol > 0:
            out *= expected / vol
        return out * self.nucleus_density * h ** 3


def _lattice_sites(offset, rmax, a):
    if rmax < 0:
        return np.zeros((0, 3), dtype=int)
    k = int(math.ceil((rmax + np.max(np.abs(offset))) / a)) + 1
    r = np.arange(-k, k + 1)
    idx = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    keep = np.linalg.norm(idx * a + offset, axis=1) <= rmax * (1 + 1e-12)
    return _frozen(idx[keep], int)


@dataclass(frozen=True)
class SmearedGranular(MassDistribution):
    """Granular ball whose nuclei are delocalized by a Gaussian of width
    ``smear`` while the macroscopic surface of the ball stays sharp.

    The density inside the ball is the smeared infinite lattice, scaled so
    the total mass equals that of the base ball; outside it is zero.  For
    ``smear`` of order the lattice spacing or larger the interior is
    homogeneous.
    """

    base: GranularBall
    smear: float
    variant = "SmearedGranular"

    def __post_init__(self):
        if self.smear < 0:
            raise ValueError("smear length must be >= 0")

    @property
    def total_mass(self):
        return self.base.total_mass

    @property
    def effective_width(self):
        """Per-axis std of one smeared nucleus (ball variance r_n^2/5)."""
        return math.sqrt(self.smear ** 2 + self.base.nucleus_radius ** 2 / 5.0)

    @cached_property
    def occupied_sites(self):
        """Mass-weighted count of smeared lattice nuclei inside the ball."""
        b = self.base
        se = self.effective_width
        if se >= b.spacing:
            # Poisson summation: exact up to exp(-(2 pi se / a)^2 / 2)
            return 4.0 / 3.0 * math.pi * b.radius ** 3 / b.spacing ** 3
        idx = _lattice_sites(b.lattice_offset, b.radius + 8 * se, b.spacing)
        d = np.linalg.norm(idx * b.spacing + b.lattice_offset, axis=1)
        return float(np.sum(smeared_ball_profile(d, b.radius, 1.0, se)))

    @property
    def normalization(self):
        """Scale factor applied to the smeared lattice inside the ball."""
        return self.base.n_nuclei / self.occupied_sites

    def bounds(self):
        return self.base.bounds()

    def translated(self, dx):
        return SmearedGranular(self.base.translated(dx), self.smear)

    def scaled(self, factor):
        return SmearedGranular(self.base.scaled(factor), self.smear)

    def lattice_density_at(self, points):
        """Smeared infinite-lattice density (before clipping/normalization)."""
        b = self.base
        p = np.asarray(points, float)
        shp = p.shape[:-1]
        rel = p.reshape(-1, 3) - b.center - b.lattice_offset
        s = self.smear
        if s == 0:
            return _unclipped_lattice(rel, b).reshape(shp)
        if s >= 0.25 * b.spacing:
            out = _reciprocal_lattice_density(rel, b, s)
        else:
            out = _real_lattice_density(rel, b, s)
        return out.reshape(shp)

    def density_at(self, points):
        p = np.asarray(points, float)
        inside = np.linalg.norm(p - self.base.center, axis=-1) <= self.base.radius
        val = self.normalization * self.lattice_density_at(p)
        return np.where(inside, np.maximum(val, 0.0), 0.0)

    def cell_masses(self, spec):
        if self.smear == 0:
            return self.base.cell_masses(spec)
        if self.smear < 0.5 * spec.cell_size:
            raise GridTooCoarse("cell size must resolve the smear length (h <= 2 s)")
        h = spec.cell_size
        cen = spec.centers()
        rho = self.normalization * self.lattice_density_at(cen)
        frac = _ball_fraction_on_centers(cen, self.base.center, self.base.radius, h)
        m = np.maximum(rho, 0.0) * frac * h ** 3
        tot = m.sum()
        if tot > 0 and spec.covers(*self.bounds()):
            m *= self.total_mass / tot
        return m


def _unclipped_lattice(rel, b):
    idx = np.rint(rel / b.spacing)
    near = np.linalg.norm(rel - idx * b.spacing, axis=-1) <= b.nucleus_radius
    return np.where(near, b.nucleus_density, 0.0)


def _real_lattice_density(rel, b, s):
    a = b.spacing
    K = int(math.ceil((b.nucleus_radius + 8 * s) / a)) + 1
    r = np.arange(-K, K + 1)
    offs = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3) * a
    base_site = np.rint(rel / a) * a
    d0 = rel - base_site
    out = np.zeros(len(rel))
    for o in offs:
        d = np.linalg.norm(d0 - o, axis=1)
        out += smeared_ball_profile(d, b.nucleus_radius, b.nucleus_density, s)
    return out


def _reciprocal_vectors(a, s, tol=40.0):
    nmax = int(math.ceil(math.sqrt(2 * tol) * a / (2 * math.pi * s)))
    r = np.arange(-nmax, nmax + 1)
    n = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    G = 2 * math.pi * n / a
    g2 = np.sum(G * G, axis=1)
    keep = 0.5 * g2 * s * s <= tol
    return G[keep], np.sqrt(g2[keep])


def _form_factor(q, r_n):
    x = np.asarray(q, float) * r_n
    out = np.ones_like(x)
    nz = x > 1e-4
    xn = x[nz]
    out[nz] = 3 * (np.sin(xn) - xn * np.cos(xn)) / xn ** 3
    out[~nz] = 1 - x[~nz] ** 2 / 10
    return out


def _reciprocal_lattice_density(rel, b, s):
    G, g = _reciprocal_vectors(b.spacing, s)
    coef = b.lattice_density * _form_factor(g, b.nucleus_radius) * np.exp(-0.5 * g * g * s * s)
    out = np.zeros(len(rel))
    for k in range(0, len(rel), 4096):
        phase = rel[k:k + 4096] @ G.T
        out[k:k + 4096] = np.cos(phase) @ coef
    return out


@dataclass(frozen=True)
class VoxelGrid(MassDistribution):
    """Piecewise-constant density on a regular grid; zero outside."""

    origin: tuple
    cell_size: float
    density: np.ndarray
    variant = "VoxelGrid"

    def __post_init__(self):
        d = np.array(self.density, float)
        if d.ndim != 3:
            raise ValueError("density array must be 3-D")
        if np.any(d < 0):
            raise ValueError("cell densities must be non-negative")
        object.__setattr__(self, "density", _frozen(d))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @property
    def spec(self):
        return GridSpec(self.origin, self.cell_size, self.density.shape)

    @property
    def masses(self):
        return self.density * self.cell_size ** 3

    @property
    def total_mass(self):
        return float(self.density.sum() * self.cell_size ** 3)

    def bounds(self):
        return self.spec.lo, self.spec.hi

    def density_at(self, points):
        p = np.asarray(points, float)
        idx = np.floor((p - self.spec.lo) / self.cell_size).astype(int)
        n = np.array(self.density.shape)
        ok = np.all((idx >= 0) & (idx < n), axis=-1)
        idx = np.where(ok[..., None], idx, 0)
        return np.where(ok, self.density[idx[..., 0], idx[..., 1], idx[..., 2]], 0.0)

    def translated(self, dx):
        """Shift the field on the same grid, linear interpolation per axis."""
        out = np.array(self.density)
        for axis, d in enumerate(np.asarray(dx, float).reshape(3)):
            if d != 0:
                out = _shift_axis(out, d / self.cell_size, axis)
        return VoxelGrid(self.origin, self.cell_size, np.maximum(out, 0.0))

    def scaled(self, factor):
        return VoxelGrid(self.origin, self.cell_size, self.density * factor)

    def cell_masses(self, spec):
        if spec == self.spec:
            return self.masses.copy()
        off = (spec.lo - self.spec.lo) / self.cell_size
        if (abs(spec.cell_size - self.cell_size) > 1e-12 * self.cell_size
                or np.any(np.abs(off - np.rint(off)) > 1e-6)):
            raise IncompatibleGrids("grids must share cell size and alignment")
        off = np.rint(off).astype(int)
        out = np.zeros(spec.shape)
        src = [slice(max(o, 0), min(o + n, m)) for o, n, m in
               zip(off, spec.shape, self.density.shape)]
        dst = [slice(s.start - o, s.stop - o) for s, o in zip(src, off)]
        if all(s.stop > s.start for s in src):
            out[tuple(dst)] = self.masses[tuple(src)]
        return out

    def coarsened(self):
        """Merge 2x2x2 blocks (dimensions must be even)."""
        n = np.array(self.density.shape)
        if np.any(n % 2):
            raise IncompatibleGrids("coarsening needs even grid dimensions")
        d = self.density.reshape(n[0] // 2, 2, n[1] // 2, 2, n[2] // 2, 2).mean(axis=(1, 3, 5))
        return VoxelGrid(self.origin, 2 * self.cell_size, d)


def _shift_axis(a, t, axis):
    k = int(math.floor(t))
    f = t - k
    a = np.moveaxis(a, axis, 0)
    out = np.zeros_like(a)
    n = a.shape[0]

    def put(shift, w):
        if w == 0 or abs(shift) >= n:
            return
        if shift >= 0:
            out[shift:] += w * a[:n - shift]
        else:
            out[:n + shift] += w * a[-shift:]

    put(k, 1 - f)
    put(k + 1, f)
    return np.moveaxis(out, 0, axis)


# ----------------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------------

def evaluate_density(dist, r):
    """Density [kg/m^3] of ``dist`` at position(s) ``r``."""
    r = np.asarray(r, float)
    if not np.all(np.isfinite(r)):
        raise ValueError("evaluation point must be finite")
    return dist.density_at(r)


def translate(dist, dx):
    """Return ``dist`` rigidly displaced by ``dx`` (a 3-vector)."""
    return dist.translated(dx)


def coarse_grain(dist, policy, grid):
    """Smooth ``dist`` with the policy kernel onto ``grid``.

    The grid must resolve the kernel (cell size <= resolution/2) and cover
    the support of ``dist`` plus a 3-sigma margin.
    """
    h = grid.cell_size
    sigma = policy.resolution
    if h > 0.5 * sigma * (1 + 1e-12):
        raise GridTooCoarse(f"cell size {h:g} exceeds half the resolution {sigma:g}")
    lo, hi = dist.bounds()
    if not grid.covers(np.asarray(lo) - 3 * sigma, np.asarray(hi) + 3 * sigma):
        raise SupportNotCovered("grid must cover the support plus a 3-sigma margin")
    m = dist.cell_masses(grid)
    w = policy.kernel_weights(h)
    smoothed = fftconvolve(m, w, mode="same")
    smoothed = np.maximum(smoothed, 0.0)
    tot = smoothed.sum()
    if tot > 0:
        # removes FFT round-off drift only; the kernel is already unit-sum
        smoothed *= m.sum() / tot
    return VoxelGrid(grid.origin, h, smoothed / h ** 3)


def smearing_sweep(base, s_values):
    """Family of models interpolating between the granular ball (s = 0)
    and a homogeneous ball (s of several lattice spacings)."""
    s_values = [float(s) for s in s_values]
    if any(s < 0 for s in s_values) or s_values != sorted(s_values):
        raise ValueError("smear lengths must be non-negative and ascending")
    return [base if s == 0 else SmearedGranular(base, s) for s in s_values]


# ----------------------------------------------------------------------------
# lattice mean-square density (used by the rate-vs-smearing analysis)
# ----------------------------------------------------------------------------

def _lens_volume(d, r):
    d = np.asarray(d, float)
    return np.where(d < 2 * r, math.pi / 12 * (4 * r + d) * (2 * r - d) ** 2, 0.0)


def _nucleus_overlap(d, b, s):
    """Overlap integral  int b_s(x) b_s(x + d) d^3x  of two smeared nuclei."""
    rn, rho = b.nucleus_radius, b.nucleus_density
    if s == 0:
        return rho * rho * float(_lens_volume(d, rn))
    tau = _SQRT2 * s
    A = lambda r: rho * rho * float(_lens_volume(r, rn))
    if d == 0:
        f = lambda r: r * r * A(r) * math.exp(-r * r / (2 * tau * tau))
        val, _ = integrate.quad(f, 0, 2 * rn, epsabs=0, epsrel=1e-11, limit=200)
        return math.sqrt(2 / math.pi) / tau ** 3 * val
    if d - 2 * rn > 12 * tau:
        return 0.0

    def f(r):
        return r * A(r) * (math.exp(-(d - r) ** 2 / (2 * tau * tau))
                           - math.exp(-(d + r) ** 2 / (2 * tau * tau)))

    pts = [min(max(d, 0.0), 2 * rn)]
    val, _ = integrate.quad(f, 0, 2 * rn, epsabs=0, epsrel=1e-11, limit=200, points=pts)
    return val / (math.sqrt(2 * math.pi) * tau * d)


def lattice_mean_square_density(base, s, method="auto"):
    """Cell average of the squared smeared-lattice density [kg^2/m^6].

    ``method`` selects the real-space overlap sum (fast for s << a), the
    reciprocal-lattice sum (fast for s >~ a/4), or picks automatically.
    """
    a = base.spacing
    if method == "auto":
        method = "real" if s < 0.25 * a else "reciprocal"
    if method == "reciprocal":
        if s == 0:
            raise ValueError("reciprocal sum does not converge at s = 0")
        _, g = _reciprocal_vectors(a, s, tol=36.0)
        F = _form_factor(g, base.nucleus_radius)
        return base.lattice_density ** 2 * float(np.sum(F * F * np.exp(-g * g * s * s)))
    reach = 2 * base.nucleus_radius + 12 * _SQRT2 * s
    K = int(math.ceil(reach / a))
    r = np.arange(-K, K + 1)
    n = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    n2 = np.sum(n * n, axis=1)
    shells, counts = np.unique(n2[np.sqrt(n2) * a <= reach], return_counts=True)
    total = 0.0
    for q, c in zip(shells, counts):
        total += c * _nucleus_overlap(math.sqrt(q) * a, base, s)
    return total / a ** 3


# ----------------------------------------------------------------------------
# voxel grid file format
# ----------------------------------------------------------------------------

def write_voxel_grid(grid, path):
    """Write ``path`` (raw float64, x fastest) and ``path + '.txt'`` header."""
    path = str(path)
    np.asarray(grid.density, "<f8").ravel(order="F").tofile(path)
    nx, ny, nz = grid.density.shape
    ox, oy, oz = grid.origin
    with open(path + ".txt", "w") as fh:
        fh.write(f"{nx} {ny} {nz} {ox!r} {oy!r} {oz!r} {grid.cell_size!r}\n")


def read_voxel_grid(path):
    path = str(path)
    with open(path + ".txt") as fh:
        parts = fh.readline().split()
    nx, ny, nz = (int(v) for v in parts[:3])
    ox, oy, oz, h = (float(v) for v in parts[3:7])
    data = np.fromfile(path, "<f8")
    if data.size != nx * ny * nz:
        raise ValueError("voxel file size does not match its header")
    return VoxelGrid((ox, oy, oz), h, data.reshape((nx, ny, nz), order="F"))
