"""Free centre-of-mass motion under quadratic-localization collapse.

The conditional wave function obeys the norm-preserving stochastic
Schroedinger equation

    d psi = [-(i/hbar) H dt - (D/2)(x - <x>)^2 dt + sqrt(D)(x - <x>) dW] psi,

with H = p^2 / 2M and D = 2 lambda, so that the ensemble coherence between
branches a distance d apart decays at lambda d^2 (the catness rate of a
quadratic law rate = lambda dx^2).

For Gaussian states the second moments follow deterministic equations

    dVx/dt = 2 C / M - 4 D Vx^2
    dC/dt  = Vp / M  - 4 D Vx C
    dVp/dt = D hbar^2 - 4 D C^2,

whose fixed point is Vx = sqrt(hbar / (4 D M)), C = hbar / 2.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .constants import DEFAULT_CONSTANTS
from .errors import GridUnderResolved, TimestepTooCoarse

__all__ = [
    "GaussianMoments", "CollapseModelParams", "MomentTrajectory", "EnsembleResult",
    "stationary_moments", "evolve_moments", "gaussian_packet", "cat_state", "cat_grid",
    "evolve_grid_stochastic", "ScaledUniverseRow", "scaled_universe_run",
    "relaxation_rate",
]


@dataclass(frozen=True)
class GaussianMoments:
    mean_x: float
    mean_p: float
    var_x: float
    var_p: float
    cov_xp: float

    def uncertainty_excess(self, hbar):
        """Relative excess of Var(x)Var(p) - Cov^2 over hbar^2/4."""
        return (self.var_x * self.var_p - self.cov_xp ** 2) / (hbar ** 2 / 4) - 1

    @classmethod
    def minimum_uncertainty(cls, var_x, hbar, mean_x=0.0, mean_p=0.0):
        return cls(mean_x, mean_p, var_x, hbar ** 2 / (4 * var_x), 0.0)


@dataclass(frozen=True)
class CollapseModelParams:
    """``lam`` is the localization strength: rate(dx) = lam dx^2."""

    lam: float
    mass: float
    dt: float
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0 or self.dt <= 0 or self.mass <= 0:
            raise ValueError("need lam >= 0, dt > 0 and mass > 0")

    @property
    def diffusion(self):
        return 2.0 * self.lam

    def omega(self, hbar):
        """Frequency with lam = M omega^2 / hbar."""
        return math.sqrt(self.lam * hbar / self.mass)

    @classmethod
    def from_distribution(cls, dist, dt, constants=DEFAULT_CONSTANTS, probe=None, seed=0):
        """Take lam from the catness of ``dist`` at a small probe displacement."""
        from .collapse import rate_displaced
        if probe is None:
            lo, hi = dist.bounds()
            probe = 1e-4 * float(np.min(hi - lo))
        lam = rate_displaced(dist, probe, constants).rate / probe ** 2
        return cls(lam, dist.total_mass, dt, seed)


def stationary_moments(params, hbar=DEFAULT_CONSTANTS.hbar):
    D, M = params.diffusion, params.mass
    if D == 0:
        raise ValueError("no stationary state without collapse")
    vx = math.sqrt(hbar / (4 * D * M))
    c = hbar / 2
    vp = 4 * D * M * vx * c
    return GaussianMoments(0.0, 0.0, vx, vp, c)


def _moment_rhs(y, D, M, hbar):
    vx, c, vp = y
    return np.array([2 * c / M - 4 * D * vx * vx,
                     vp / M - 4 * D * vx * c,
                     D * hbar * hbar - 4 * D * c * c])


def _fastest_rate(params, var_x, hbar, kinetic=True):
    lam, M = params.lam, params.mass
    rates = [lam * var_x, 2 * math.sqrt(2 * lam * hbar / M)]
    if kinetic:
        rates.append(hbar / (M * var_x))
    return max(rates)


@dataclass(frozen=True)
class MomentTrajectory:
    t: np.ndarray
    mean_x: np.ndarray
    mean_p: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray
    cov_xp: np.ndarray

    def at(self, i):
        return GaussianMoments(self.mean_x[i], self.mean_p[i], self.var_x[i],
                               self.var_p[i], self.cov_xp[i])


def evolve_moments(params, state, T, hbar=DEFAULT_CONSTANTS.hbar, stride=1):
    """Integrate the Gaussian moment equations (RK4) for a duration ``T``.

    Means follow their noise-averaged motion; the variances are the
    (noise-free) conditional variances.
    """
    dt = params.dt
    rate = _fastest_rate(params, state.var_x, hbar)
    if params.lam > 0:
        rate = max(rate, _fastest_rate(params, stationary_moments(params, hbar).var_x, hbar))
    if dt > 0.01 / rate * (1 + 1e-9):
        raise TimestepTooCoarse(f"dt = {dt:g} > 0.01 / {rate:g}")
    D, M = params.diffusion, params.mass
    n = int(round(T / dt))
    y = np.array([state.var_x, state.cov_xp, state.var_p], float)
    out = [y.copy()]
    for i in range(n):
        k1 = _moment_rhs(y, D, M, hbar)
        k2 = _moment_rhs(y + 0.5 * dt * k1, D, M, hbar)
        k3 = _moment_rhs(y + 0.5 * dt * k2, D, M, hbar)
        k4 = _moment_rhs(y + dt * k3, D, M, hbar)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i + 1) % stride == 0 or i == n - 1:
            out.append(y.copy())
    steps = np.array([0] + [i + 1 for i in range(n) if (i + 1) % stride == 0 or i == n - 1])
    t = steps * dt
    Y = np.array(out)
    mean_p = np.full(len(t), state.mean_p)
    mean_x = state.mean_x + state.mean_p / M * t
    return MomentTrajectory(t, mean_x, mean_p, Y[:, 0], Y[:, 2], Y[:, 1])


# ----------------------------------------------------------------------------
# grid wave functions
# ----------------------------------------------------------------------------

def gaussian_packet(x, x0, sigma, p0=0.0, hbar=DEFAULT_CONSTANTS.hbar):
    x = np.asarray(x, float)
    dx = x[1] - x[0]
    psi = np.exp(-(x - x0) ** 2 / (4 * sigma ** 2) + 1j * p0 * x / hbar)
    return psi / math.sqrt(np.sum(np.abs(psi) ** 2) * dx)


def cat_state(x, separation, sigma, center=0.0):
    """Equal superposition of two packets at center -+ separation/2."""
    x = np.asarray(x, float)
    dx = x[1] - x[0]
    h = separation / 2
    psi = (np.exp(-(x - center + h) ** 2 / (4 * sigma ** 2))
           + np.exp(-(x - center - h) ** 2 / (4 * sigma ** 2))).astype(complex)
    return psi / math.sqrt(np.sum(np.abs(psi) ** 2) * dx)


@dataclass
class EnsembleResult:
    t: np.ndarray
    mean_var_x: np.ndarray
    sem_var_x: np.ndarray
    mean_var_p: np.ndarray
    coherence: np.ndarray
    mean_kinetic: np.ndarray
    final_var_x: np.ndarray
    prob_left: np.ndarray
    max_norm_drift: float
    info: dict = field(default_factory=dict)

    def coherence_rate(self, tmax=None, depth=2.0):
        """Exponential decay rate of the coherence from a log-linear fit.

        Only samples above ``exp(-depth)`` of the initial value enter the
        fit; below that the ensemble mean is dominated by sampling noise.
        """
        c = self.coherence
        sel = c > c[0] * math.exp(-depth)
        if tmax is not None:
            sel &= self.t <= tmax
        slope, _ = np.polyfit(self.t[sel], np.log(c[sel]), 1)
        return -slope


def cat_grid(separation, sigma, points_per_sigma=16):
    """Periodic x-grid for a cat of two packets of width ``sigma``.

    The extent leaves 12 sigma of vacuum on each side and keeps the
    periodic image of the pair at least 12.5 sigma away from ``separation``;
    the point count is a power of two.
    """
    d = float(separation)
    L = d + 24 * sigma
    if abs(L - 2 * d) < 12.5 * sigma:
        L = 2 * d + 12.5 * sigma
    n = int(2 ** math.ceil(math.log2(points_per_sigma * L / sigma)))
    return np.linspace(-L / 2, L / 2, n, endpoint=False)


def _feature_width(psi, k):
    pk = np.abs(np.fft.fft(psi)) ** 2
    pk /= pk.sum()
    mk = np.sum(k * pk)
    sk = math.sqrt(max(np.sum((k - mk) ** 2 * pk), 1e-300))
    return 1.0 / (2 * sk)


def evolve_grid_stochastic(params, psi0, x, T, realizations, hbar=DEFAULT_CONSTANTS.hbar,
                           coherence_separation=None, record_every=10, recenter=True,
                           workers=None):
    """Ensemble of stochastic trajectories from a common initial state.

    Kinetic steps are exact in momentum space; the collapse factor is the
    exponential form exp(-D dX^2 dt + sqrt(D) dX dW), which has the same
    Ito drift as the Euler-Maruyama step, followed by renormalization.
    Each realization draws its noise from its own child of
    ``SeedSequence(params.seed)``.

    ``coherence_separation`` d selects the coherence measure
    |E[ int psi*(x) psi(x + d) dx ]|, which decays exactly at lam d^2.
    """
    x = np.asarray(x, float)
    N = len(x)
    dx = x[1] - x[0]
    dt, M, D = params.dt, params.mass, params.diffusion
    k = 2 * np.pi * np.fft.fftfreq(N, dx)
    width = _feature_width(psi0, k)
    if width < 16 * dx:
        raise GridUnderResolved(f"packet width {width:g} < 16 dx")
    if coherence_separation is not None:
        if coherence_separation < 16 * dx:
            raise GridUnderResolved("superposition separation < 16 dx")
        # the periodic image of the pair sits at lag L - d
        if abs(N * dx - 2 * coherence_separation) < 12 * width:
            raise GridUnderResolved("grid extent lets the periodic image of the pair "
                                    "overlap the coherence lag")
    dens = np.abs(psi0) ** 2 * dx
    edge = max(1, N // 20)
    if dens[:edge].sum() + dens[-edge:].sum() > 1e-8:
        raise GridUnderResolved("initial state reaches the grid boundary")
    var0 = float(np.sum(dens * x ** 2) - np.sum(dens * x) ** 2)
    rate = _fastest_rate(params, var0, hbar, kinetic=False)
    if coherence_separation is not None:
        rate = max(rate, params.lam * coherence_separation ** 2)
    if dt > 0.01 / rate * (1 + 1e-9):
        raise TimestepTooCoarse(f"dt = {dt:g} > 0.01 / {rate:g}")

    n = int(round(T / dt))
    R = int(realizations)
    children = np.random.SeedSequence(params.seed).spawn(R)
    noise = np.stack([np.random.default_rng(c).standard_normal(n) for c in children])
    noise *= math.sqrt(dt)
    kin = np.exp(-1j * hbar * k * k * dt / (2 * M))
    psi = np.tile(np.asarray(psi0, complex), (R, 1))
    offset = np.zeros(R)
    center = 0.5 * (x[0] + x[-1])
    sqD = math.sqrt(D)
    phase_d = None if coherence_separation is None else np.exp(-1j * k * coherence_separation)

    rec_t, rec_var, rec_sem, rec_coh, rec_kin, rec_vp = [], [], [], [], [], []
    drift = 0.0

    def record(step):
        p = np.abs(psi) ** 2 * dx
        m = p @ x
        var = p @ (x * x) - m * m
        pk = np.abs(sfft.fft(psi, axis=1, workers=workers)) ** 2
        pk /= pk.sum(axis=1, keepdims=True)
        rec_t.append(step * dt)
        rec_var.append(var.mean())
        rec_sem.append(var.std(ddof=1) / math.sqrt(R) if R > 1 else 0.0)
        mk = pk @ k
        rec_vp.append(float(np.mean(pk @ (k * k) - mk * mk)) * hbar * hbar)
        rec_kin.append(float(np.mean(pk @ (hbar * k) ** 2)) / (2 * M))
        if phase_d is not None:
            rec_coh.append(abs(np.mean(pk @ phase_d)))
        return var

    record(0)
    for i in range(n):
        psi = sfft.ifft(sfft.fft(psi, axis=1, workers=workers) * kin, axis=1, workers=workers)
        p = np.abs(psi) ** 2
        norm = p.sum(axis=1) * dx
        drift = max(drift, float(np.max(np.abs(norm - 1))))
        m = (p @ x) * dx / norm
        X = x[None, :] - m[:, None]
        psi *= np.exp(-D * X * X * dt + sqD * X * noise[:, i:i + 1])
        psi /= np.sqrt(np.sum(np.abs(psi) ** 2, axis=1) * dx)[:, None]
        if recenter and (i + 1) % 20 == 0:
            # only states with no weight far from the mean are moved, so
            # nothing that still matters wraps around
            p = np.abs(psi) ** 2 * dx
            far = np.sum(np.where(np.abs(x[None, :] - m[:, None]) > N * dx / 4, p, 0.0), axis=1)
            shift = np.rint((m - center) / dx).astype(int)
            move = (np.abs(shift) > N // 8) & (far < 1e-14)
            if np.any(move):
                idx = (np.arange(N)[None, :] + shift[move, None]) % N
                psi[move] = np.take_along_axis(psi[move], idx, axis=1)
                offset[move] += shift[move] * dx
        if (i + 1) % record_every == 0 or i == n - 1:
            final_var = record(i + 1)
    if n == 0:
        final_var = record(0)
    p = np.abs(psi) ** 2 * dx
    xabs = x[None, :] + offset[:, None]
    prob_left = np.sum(np.where(xabs < 0, p, 0.0), axis=1)
    return EnsembleResult(np.array(rec_t), np.array(rec_var), np.array(rec_sem),
                          np.array(rec_vp), np.array(rec_coh), np.array(rec_kin),
                          final_var, prob_left,
                          drift, dict(realizations=R, dt=dt, dx=dx, n_steps=n))


# ----------------------------------------------------------------------------
# scaled-universe comparison
# ----------------------------------------------------------------------------

def relaxation_rate(t, v, v_inf):
    """Asymptotic decay rate of |v - v_inf| from the tail energy
    E(t) = int_t^inf (v - v_inf)^2 dt', fitted as exp(-2 rate t)."""
    t = np.asarray(t, float)
    dev2 = (np.asarray(v, float) - v_inf) ** 2
    seg = 0.5 * (dev2[1:] + dev2[:-1]) * np.diff(t)
    E = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    sel = (E < 1e-2 * E[0]) & (E > 1e-8 * E[0])
    if sel.sum() < 3:
        sel = (E > 1e-12 * E[0]) & (E < 0.5 * E[0])
    slope, _ = np.polyfit(t[sel], np.log(E[sel]), 1)
    return -slope / 2


@dataclass(frozen=True)
class ScaledUniverseRow:
    """One body in the scaled universe.

    ``var_wide``/``var_narrow`` are the terminal Var(x) reached from an
    over-wide and an over-narrow packet; ``method`` tells whether they come
    from a stochastic grid ensemble or from the moment equations.
    """

    mass: float
    hbar: float
    omega: float
    lam: float
    predicted_var: float
    predicted_rate: float
    stationary_var: float
    var_wide: float
    var_narrow: float
    relaxation_rate: float
    method: str

    @property
    def var_ratio(self):
        """Simulated stationary Var(x) over hbar / (M omega)."""
        return 0.5 * (self.var_wide + self.var_narrow) / self.predicted_var

    @property
    def width_ratio(self):
        return math.sqrt(self.var_ratio)

    @property
    def rate_ratio(self):
        return self.relaxation_rate / self.predicted_rate


def scaled_universe_run(scale=None, masses=(1.0, 10.0, 100.0), hbar_factors=(1.0, 4.0),
                        density=1e3, target_omega=1.0, realizations=200, T_omega=4.0,
                        dt_omega=3.5e-3, n_grid=2048, wide=4.0, narrow=0.25, seed=0,
                        constants=DEFAULT_CONSTANTS, stochastic=True, workers=None):
    """Simulate the free-body balance in a universe with G scaled by ``scale``.

    With ``scale=None`` the factor is chosen so the Newton frequency of
    ``density`` equals ``target_omega``.  lam comes from the catness of a
    uniform ball of each mass.  The first mass of every hbar factor is run
    as a stochastic grid ensemble (if ``stochastic``); the remaining masses
    use the moment equations.  Times are in units of 1/omega.
    """
    from .density import UniformBall
    from .equilibrium import equilibrium_report

    if scale is None:
        scale = target_omega ** 2 / (4 * math.pi * constants.G * density / 3)
    rows = []
    for hf in hbar_factors:
        cons = constants.scaled(G_factor=scale, hbar_factor=hf)
        for j, M in enumerate(masses):
            rep = equilibrium_report(M, density, density, "atomic", cons)
            w = rep.omega_G
            ball = UniformBall.from_mass(M, (3 * M / (4 * math.pi * density)) ** (1 / 3))
            T = T_omega / w
            if stochastic and j == 0:
                base = CollapseModelParams.from_distribution(ball, dt_omega / w, cons, seed=seed)
                st = stationary_moments(base, cons.hbar)
                finals, runs = [], []
                L = 24 * math.sqrt(max(wide, 1.0) * st.var_x)
                x = np.linspace(-L / 2, L / 2, n_grid, endpoint=False)
                for factor in (wide, narrow):
                    psi0 = gaussian_packet(x, 0.0, math.sqrt(factor * st.var_x), hbar=cons.hbar)
                    ens = evolve_grid_stochastic(base, psi0, x, T, realizations, cons.hbar,
                                                 record_every=5, workers=workers)
                    finals.append(float(np.mean(ens.final_var_x)))
                    runs.append(ens)
                rate = relaxation_rate(runs[0].t, runs[0].mean_var_x, finals[0])
                method = "stochastic"
            else:
                # moment equations need the kinetic scale of the narrow packet
                base = CollapseModelParams.from_distribution(ball, 1.0, cons, seed=seed)
                st = stationary_moments(base, cons.hbar)
                vmin = min(narrow, 1.0) * st.var_x
                dt = 0.01 / _fastest_rate(base, vmin, cons.hbar)
                base = CollapseModelParams(base.lam, M, dt, seed)
                finals = []
                for factor in (wide, narrow):
                    tr = evolve_moments(base, GaussianMoments.minimum_uncertainty(
                        factor * st.var_x, cons.hbar), T, cons.hbar)
                    finals.append(float(tr.var_x[-1]))
                    if factor == wide:
                        rate = relaxation_rate(tr.t, tr.var_x, st.var_x)
                method = "moments"
            rows.append(ScaledUniverseRow(M, cons.hbar, w, base.lam, cons.hbar / (M * w), w,
                                          st.var_x, finals[0], finals[1], rate, method))
    return rows
