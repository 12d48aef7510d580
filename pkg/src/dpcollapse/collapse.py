"""Catness, collapse rates and rate curves.

The catness of two mass configurations is

    lG2(f, f') = 2 U(f, f') - U(f, f) - U(f', f')  = -U(f - f', f - f'),

and a superposition of them decays at ``rate = lG2 / hbar``.  The rate is
taken literally as written; conventions that quote half of it for the
coherence-amplitude decay are not used.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import DEFAULT_CONSTANTS
from .density import (GranularBall, PointSet, SmearedGranular, UniformBall,
                      VoxelGrid, lattice_mean_square_density, translate)
from .errors import NumericalInconsistency, SingularSelfEnergy, ValidityDomain
from .potential import (_grid_energy_fft, ball_catness_shape, ball_energy_shape,
                        grid_for, lattice_catness, mutual_energy,
                        mutual_energy_lattices, self_energy)

__all__ = [
    "CatnessResult", "RateCurve", "catness", "rate_displaced",
    "rate_granular_small_disp", "rate_vs_smearing", "full_rate_curve",
    "quadratic_fit", "quadratic_coefficient", "newton_omega_squared",
]


@dataclass(frozen=True)
class CatnessResult:
    lG2: float
    U_ff: float
    U_ffp: float
    U_fpfp: float
    hbar: float
    method: str = "analytic"
    estimated_error: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def rate(self):
        return self.lG2 / self.hbar

    @property
    def lifetime(self):
        return math.inf if self.lG2 == 0 else self.hbar / self.lG2


@dataclass(frozen=True)
class RateCurve:
    """Rates sampled against displacement or smear length."""

    variable: str
    x: np.ndarray
    rate: np.ndarray
    kappa: float = math.nan
    fit_residual: float = math.nan
    saturation_rate: float = math.nan
    const: float = math.nan
    info: dict = field(default_factory=dict)

    def rows(self):
        return list(zip(self.x.tolist(), self.rate.tolist()))


def newton_omega_squared(rho, constants=DEFAULT_CONSTANTS):
    return 4 * math.pi * constants.G * rho / 3


def quadratic_coefficient(kappa, mass, omega, hbar):
    """Dimensionless constant  kappa hbar / (M omega^2)."""
    return kappa * hbar / (mass * omega ** 2)


def quadratic_fit(x, rate):
    """Least-squares rate = kappa x^2 through the origin.

    Returns (kappa, max relative residual).
    """
    x = np.asarray(x, float)
    r = np.asarray(rate, float)
    kappa = float(np.sum(r * x ** 2) / np.sum(x ** 4))
    resid = float(np.max(np.abs(r / (kappa * x ** 2) - 1)))
    return kappa, resid


def _finalize(lG2, Uff, Uffp, Ufpfp, hbar, method, err, info=None):
    if lG2 < 0:
        tol = err * (abs(Uff) + abs(Ufpfp) + 2 * abs(Uffp)) + 1e-12 * abs(Uff)
        if -lG2 <= tol:
            warnings.warn(f"clamping slightly negative catness {lG2:.3e} to 0",
                          RuntimeWarning, stacklevel=3)
            lG2 = 0.0
        else:
            raise NumericalInconsistency(f"negative catness {lG2:.3e} beyond tolerance {tol:.3e}")
    return CatnessResult(lG2, Uff, Uffp, Ufpfp, hbar, method, err, info or {})


def _same_ball(f, g):
    return (math.isclose(f.radius, g.radius, rel_tol=1e-12)
            and math.isclose(f.density, g.density, rel_tol=1e-12))


def _same_lattice(f, g):
    return (math.isclose(f.spacing, g.spacing, rel_tol=1e-12)
            and math.isclose(f.nucleus_radius, g.nucleus_radius, rel_tol=1e-12)
            and math.isclose(f.nucleus_density, g.nucleus_density, rel_tol=1e-12)
            and np.array_equal(f.lattice_indices, g.lattice_indices))


def catness(f, fp, constants=DEFAULT_CONSTANTS, grid_n=64):
    """Catness of the superposition of ``f`` and ``fp``."""
    if isinstance(f, PointSet) or isinstance(fp, PointSet):
        raise SingularSelfEnergy("point masses have divergent self-energy; "
                                 "apply a cutoff (coarse_grain) first")
    G, hbar = constants.G, constants.hbar
    if isinstance(f, UniformBall) and isinstance(fp, UniformBall) and _same_ball(f, fp):
        M, R = f.total_mass, f.radius
        x = float(np.linalg.norm(f.center - fp.center)) / R
        Uff = -6 / 5 * G * M * M / R
        Uffp = -G * M * M / R * float(ball_energy_shape(x))
        lG2 = G * M * M / R * float(ball_catness_shape(x))
        return _finalize(lG2, Uff, Uffp, Uff, hbar, "analytic", 0.0)
    if isinstance(f, GranularBall) and isinstance(fp, GranularBall) and _same_lattice(f, fp):
        shift = (fp.center + fp.lattice_offset) - (f.center + f.lattice_offset)
        Uff = mutual_energy_lattices(f, f, constants).value
        Uffp = mutual_energy_lattices(f, fp, constants).value
        lG2 = lattice_catness(f, shift, constants)
        return _finalize(lG2, Uff, Uffp, Uff, hbar, "analytic", 0.0)
    if isinstance(f, UniformBall) and isinstance(fp, UniformBall):
        if float(np.linalg.norm(f.center - fp.center)) >= f.radius + fp.radius:
            Uff = self_energy(f, constants).value
            Ufpfp = self_energy(fp, constants).value
            Uffp = mutual_energy(f, fp, constants).value
            return _finalize(2 * Uffp - Uff - Ufpfp, Uff, Uffp, Ufpfp, hbar,
                             "analytic", 0.0)
    return _grid_catness(f, fp, constants, grid_n)


def _grid_catness(f, fp, constants, grid_n):
    G, hbar = constants.G, constants.hbar
    if isinstance(f, VoxelGrid) and isinstance(fp, VoxelGrid) and f.spec == fp.spec:
        spec = f.spec
    else:
        spec = grid_for([f, fp], grid_n)
    mf = f.cell_masses(spec)
    mp = fp.cell_masses(spec)
    h = spec.cell_size
    Uff = _grid_energy_fft(mf, mf, h, G)
    Ufpfp = _grid_energy_fft(mp, mp, h, G)
    Uffp = _grid_energy_fft(mf, mp, h, G)
    delta = mf - mp
    lG2 = -_grid_energy_fft(delta, delta, h, G)
    err = 0.0
    if all(n % 2 == 0 for n in spec.shape) and lG2 != 0:
        n = spec.shape
        dc = delta.reshape(n[0] // 2, 2, n[1] // 2, 2, n[2] // 2, 2).sum(axis=(1, 3, 5))
        lc = -_grid_energy_fft(dc, dc, 2 * h, G)
        err = abs(lG2 - lc) / abs(lG2) / 3.0
    info = {"grid_shape": spec.shape, "cell_size": h}
    return _finalize(lG2, Uff, Uffp, Ufpfp, hbar, "fft", err, info)


def _as_vector(dx):
    a = np.asarray(dx, float)
    if a.ndim == 0:
        return np.array([float(a), 0.0, 0.0])
    return a.reshape(3)


def rate_displaced(f, dx, constants=DEFAULT_CONSTANTS, grid_n=64):
    """Catness of ``f`` against its copy rigidly displaced by ``dx``."""
    return catness(f, translate(f, _as_vector(dx)), constants, grid_n)


def rate_granular_small_disp(g, dx, constants=DEFAULT_CONSTANTS):
    """Granular-ball rate in the regime |dx| << nucleus radius.

    Besides the exact lattice result, ``info`` carries the additive
    per-nucleus prediction and the relative size of the cross terms.
    """
    v = _as_vector(dx)
    d = float(np.linalg.norm(v))
    if d > g.nucleus_radius / 10 * (1 + 1e-12):
        raise ValidityDomain(f"|dx| = {d:g} exceeds nucleus_radius/10 = {g.nucleus_radius / 10:g}")
    res = rate_displaced(g, v, constants)
    G, m, rn = constants.G, g.nucleus_mass, g.nucleus_radius
    per_nucleus = G * m * m / rn * float(ball_catness_shape(d / rn))
    additive = g.n_nuclei * per_nucleus
    law = g.total_mass * newton_omega_squared(g.nucleus_density, constants) * d * d
    info = dict(res.info)
    info.update(additive_lG2=additive, quadratic_law_lG2=law,
                cross_fraction=(res.lG2 - additive) / res.lG2 if res.lG2 else 0.0)
    return CatnessResult(res.lG2, res.U_ff, res.U_ffp, res.U_fpfp, res.hbar,
                         res.method, res.estimated_error, info)


def smeared_rate(model, dx, constants=DEFAULT_CONSTANTS, method="auto"):
    """Quadratic-regime rate of a smeared granular ball.

    Uses  lG2 = (4 pi G / 3) |dx|^2 int f^2 d^3r,  exact to leading order
    for densities with cubic symmetry.  The interior is treated as the
    bulk smeared lattice filled to the mean density M / V; the sharp outer
    surface contributes no extra surface term.  The rate is then
    proportional to the lattice mean-square density and cannot increase
    with the smear.
    """
    b = model.base
    d = float(np.linalg.norm(_as_vector(dx)))
    ms = lattice_mean_square_density(b, model.smear, method)
    fill = b.mean_density / b.lattice_density
    int_f2 = fill * model.total_mass * ms / b.lattice_density
    return 4 * math.pi * constants.G / 3 * d * d * int_f2 / constants.hbar


def rate_vs_smearing(base, s_values, dx, constants=DEFAULT_CONSTANTS):
    """Collapse rate of ``base`` as its nuclei are smeared by s.

    s = 0 is the exact granular result; s > 0 uses :func:`smeared_rate`.
    """
    s_values = np.asarray(s_values, float)
    if np.any(s_values < 0) or np.any(np.diff(s_values) < 0):
        raise ValueError("smear lengths must be non-negative and ascending")
    d = float(np.linalg.norm(_as_vector(dx)))
    rates = []
    for s in s_values:
        limit = (base.nucleus_radius if s == 0 else min(base.nucleus_radius, s)) / 10
        if d > limit * (1 + 1e-12):
            raise ValidityDomain(f"|dx| = {d:g} exceeds {limit:g} at s = {s:g}")
        if s == 0:
            rates.append(rate_displaced(base, dx, constants).rate)
        else:
            rates.append(smeared_rate(SmearedGranular(base, float(s)), dx, constants))
    rates = np.array(rates)
    M = base.total_mass
    granular = M * newton_omega_squared(base.nucleus_density, constants) * d * d / constants.hbar
    homogeneous = M * newton_omega_squared(base.mean_density, constants) * d * d / constants.hbar
    info = dict(displacement=d, granular_law=granular, homogeneous_law=homogeneous,
                spacing=base.spacing, nucleus_radius=base.nucleus_radius)
    return RateCurve("smear", s_values, rates, info=info)


def full_rate_curve(f, dx_values, constants=DEFAULT_CONSTANTS, grid_n=64, omega=None):
    """Exact rates over ``dx_values`` with a quadratic fit on the smallest decade.

    ``omega`` sets the reference frequency of the reported constant
    kappa hbar / (M omega^2); by default the Newton frequency of the mean
    density (uniform ball) or of the nuclear density (granular ball).
    """
    dx_values = np.asarray(dx_values, float)
    if np.any(np.diff(dx_values) <= 0) or np.any(dx_values <= 0):
        raise ValueError("displacements must be positive and ascending")
    rates = np.array([rate_displaced(f, d, constants, grid_n).rate for d in dx_values])
    sel = dx_values <= 10 * dx_values[0] * (1 + 1e-12)
    kappa, resid = quadratic_fit(dx_values[sel], rates[sel])
    sat = -2 * self_energy(f, constants).value / constants.hbar
    if omega is None:
        if isinstance(f, GranularBall):
            rho = f.nucleus_density
        elif isinstance(f, UniformBall):
            rho = f.density
        else:
            rho = None
        omega = math.sqrt(newton_omega_squared(rho, constants)) if rho else math.nan
    const = quadratic_coefficient(kappa, f.total_mass, omega, constants.hbar)
    return RateCurve("displacement", dx_values, rates, kappa, resid, sat, const)
