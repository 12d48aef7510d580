"""Gravity pendulum driven by a source whose Newton field emerges with a lag.

Phenomenological lag law: the effective source configuration relaxes to
the true one,

    tau dg_eff/dt = g_true(t) - g_eff,    g_eff(0) = g_true(0).

Because the field is linear in the density, the field of g_eff at the
probe is the same exponential filter applied to the instantaneous field.
The pendulum is a linear damped oscillator along ``axis`` driven by that
field evaluated at its rest position.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .constants import DEFAULT_CONSTANTS
from .density import GranularBall, PointSet, UniformBall
from .errors import TimestepTooCoarse

__all__ = [
    "StepRemoval", "Revolution", "LinearShuttle", "Pendulum", "IntegrationControls",
    "CavendishScenario", "ResponseRecord", "source_acceleration", "effective_field",
    "simulate_pendulum", "detectability_report", "static_deflection", "DetectabilityRow",
]


# ----------------------------------------------------------------------------
# rigid source trajectories
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class StepRemoval:
    """Source at rest at ``position`` until it is removed at ``t0``."""

    position: tuple
    t0: float

    def position_at(self, t):
        return np.asarray(self.position, float)

    def presence(self, t, ref=None):
        # ``ref`` picks the side of the jump when t sits exactly on it
        s = t if ref is None else ref
        return 1.0 if s < self.t0 else 0.0

    def events(self, t_end):
        return [self.t0] if 0 < self.t0 < t_end else []

    @property
    def timescale(self):
        return math.inf

    @property
    def periodic(self):
        return False


@dataclass(frozen=True)
class Revolution:
    """Uniform circular motion in the plane normal to z."""

    radius: float
    period: float
    center: tuple = (0.0, 0.0, 0.0)
    phase: float = 0.0

    def position_at(self, t):
        a = 2 * math.pi * t / self.period + self.phase
        c = np.asarray(self.center, float)
        return c + self.radius * np.array([math.cos(a), math.sin(a), 0.0])

    def presence(self, t, ref=None):
        return 1.0

    def events(self, t_end):
        return []

    @property
    def timescale(self):
        return self.period / (2 * math.pi)

    @property
    def periodic(self):
        return True


@dataclass(frozen=True)
class LinearShuttle:
    """Constant-speed back-and-forth motion between ``start`` and ``end``."""

    start: tuple
    end: tuple
    period: float

    def position_at(self, t):
        a, b = np.asarray(self.start, float), np.asarray(self.end, float)
        u = (t / self.period) % 1.0
        w = 2 * u if u < 0.5 else 2 - 2 * u
        return a + w * (b - a)

    def presence(self, t, ref=None):
        return 1.0

    def events(self, t_end):
        n = int(math.floor(2 * t_end / self.period))
        return [k * self.period / 2 for k in range(1, n + 1) if k * self.period / 2 < t_end]

    @property
    def timescale(self):
        return self.period / 2

    @property
    def periodic(self):
        return True


# ----------------------------------------------------------------------------
# fields
# ----------------------------------------------------------------------------

def _point_field(masses, points, probe, G):
    r = probe[None, :] - points
    d = np.linalg.norm(r, axis=1)
    return -G * np.sum((masses / d ** 3)[:, None] * r, axis=0)


class _SourceModel:
    """Field of a rigid source as a function of its centre position."""

    def __init__(self, dist, G):
        self.G = G
        self.dist = dist
        self.mass = dist.total_mass
        c = np.asarray(getattr(dist, "center", np.zeros(3)), float)
        if isinstance(dist, UniformBall):
            self.kind = "ball"
        elif isinstance(dist, GranularBall):
            self.kind = "points"
            self.rel = dist.nuclei - c
            self.m = np.full(len(self.rel), dist.nucleus_mass)
        elif isinstance(dist, PointSet):
            self.kind = "points"
            self.rel = dist.positions - c
            self.m = dist.masses
        else:
            from .potential import grid_for
            self.kind = "points"
            spec = grid_for([dist], 32)
            cm = dist.cell_masses(spec)
            keep = cm != 0
            self.rel = spec.centers()[keep] - c
            self.m = cm[keep]

    def __call__(self, pos, probe):
        if self.kind == "ball":
            r = probe - pos
            d = float(np.linalg.norm(r))
            R = self.dist.radius
            if d >= R:
                return -self.G * self.mass * r / d ** 3
            return -self.G * self.mass * r / R ** 3
        return _point_field(self.m, self.rel + pos, probe, self.G)


def source_acceleration(dist, position, probe, constants=DEFAULT_CONSTANTS):
    """Instantaneous Newtonian acceleration at ``probe`` of ``dist`` centred at ``position``."""
    return _SourceModel(dist, constants.G)(np.asarray(position, float), np.asarray(probe, float))


def _true_field(model, traj, t, probe, ref=None):
    w = traj.presence(t, ref)
    if w == 0.0:
        return np.zeros(3)
    return w * model(traj.position_at(t), probe)


def effective_field(source, trajectory, tau, t, probe, constants=DEFAULT_CONSTANTS):
    """Acceleration at ``probe`` produced by the lagged effective source.

    ``tau = 0`` is the instantaneous field.  Step removals use the closed
    form; other trajectories integrate the relaxation kernel over the past.
    """
    model = _SourceModel(source, constants.G)
    probe = np.asarray(probe, float)
    if tau == 0:
        return _true_field(model, trajectory, t, probe)
    a0 = _true_field(model, trajectory, 0.0, probe)
    if isinstance(trajectory, StepRemoval):
        if t < trajectory.t0:
            return a0
        return a0 * math.exp(-(t - trajectory.t0) / tau)
    pts = [e for e in trajectory.events(t) if e < t]
    out = np.empty(3)
    for i in range(3):
        val, _ = integrate.quad(
            lambda r: math.exp(-(t - r) / tau) / tau * _true_field(model, trajectory, r, probe)[i],
            0.0, t, points=pts or None, limit=500, epsabs=0.0, epsrel=1e-11)
        out[i] = val + math.exp(-t / tau) * a0[i]
    return out


def _filter_weights(a):
    """(1 - e^-a, a - 1 + e^-a, a^2 - 2a + 2(1 - e^-a)) without cancellation."""
    if a < 0.05:
        # series in a; terms beyond a^9 are below double precision here
        w0 = w1 = w2 = 0.0
        term = 1.0
        for n in range(1, 12):
            term *= a / n
            sgn = (-1) ** (n + 1)
            w0 += sgn * term
            if n >= 2:
                w1 += (-1) ** n * term
            if n >= 3:
                w2 += 2 * (-1) ** (n + 1) * term
        return w0, w1, w2
    e = -math.expm1(-a)
    return e, a - e, a * a - 2 * a + 2 * e


def _relax(y0, u0, d1, d2, s, tau):
    """Exact relaxation over ``s`` with input u0 + d1 r + d2 r^2 / 2."""
    if tau == 0:
        return u0 + d1 * s + 0.5 * d2 * s * s
    w0, w1, w2 = _filter_weights(s / tau)
    return y0 * (1 - w0) + u0 * w0 + d1 * tau * w1 + 0.5 * d2 * tau * tau * w2


# ----------------------------------------------------------------------------
# pendulum
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Pendulum:
    mass: float
    omega: float
    zeta: float
    equilibrium: tuple
    axis: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.zeta < 0 or self.omega <= 0 or self.mass <= 0:
            raise ValueError("pendulum needs mass > 0, omega > 0 and zeta >= 0")

    @property
    def unit_axis(self):
        a = np.asarray(self.axis, float)
        return a / np.linalg.norm(a)


@dataclass(frozen=True)
class IntegrationControls:
    """``dt`` is the base step; after each event the step is refined to
    tau/100 for ``refine_span`` relaxation times."""

    t_end: float
    dt: float
    stride: int = 1
    refine_span: float = 30.0
    start: str = "settled"

    def __post_init__(self):
        if self.start not in ("settled", "rest"):
            raise ValueError("start must be 'settled' or 'rest'")


@dataclass(frozen=True)
class CavendishScenario:
    """Pendulum, rigid source and lag.

    The lag is ``emergence_time`` if given, else ``beta * collapse_time``.
    """

    pendulum: Pendulum
    source: object
    trajectory: object
    integration: IntegrationControls
    emergence_time: float = None
    beta: float = 1.0
    collapse_time: float = None
    constants: object = DEFAULT_CONSTANTS

    @property
    def tau(self):
        if self.emergence_time is not None:
            t = float(self.emergence_time)
        elif self.collapse_time is not None:
            t = self.beta * float(self.collapse_time)
        else:
            raise ValueError("set emergence_time or collapse_time")
        if t < 0:
            raise ValueError("emergence time must be >= 0")
        return t

    def with_tau(self, tau):
        from dataclasses import replace
        return replace(self, emergence_time=float(tau), collapse_time=None)

    def check_timestep(self):
        p = self.pendulum
        scales = [2 * math.pi / p.omega, self.trajectory.timescale]
        lim = min(scales) / 100
        if self.integration.dt > lim * (1 + 1e-9):
            raise TimestepTooCoarse(f"dt = {self.integration.dt:g} > {lim:g}")


def static_deflection(scenario):
    """Static fixed point of the pendulum in the initial field."""
    p = scenario.pendulum
    model = _SourceModel(scenario.source, scenario.constants.G)
    a = _true_field(model, scenario.trajectory, 0.0, np.asarray(p.equilibrium, float))
    return float(a @ p.unit_axis) / p.omega ** 2


def _time_grid(scenario):
    c = scenario.integration
    tau = scenario.tau
    ev = sorted(set(scenario.trajectory.events(c.t_end)))
    base = np.linspace(0.0, c.t_end, int(math.ceil(c.t_end / c.dt)) + 1)
    pieces = [base]
    if tau > 0 and tau / 100 < c.dt:
        fine = tau / 100
        for e in ev:
            stop = min(e + c.refine_span * tau, c.t_end)
            pieces.append(np.linspace(e, stop, int(math.ceil((stop - e) / fine)) + 1))
    pieces.append(np.array(ev, float))
    t = np.unique(np.concatenate(pieces))
    return t


@dataclass
class ResponseRecord:
    t: np.ndarray
    displacement: np.ndarray
    force: np.ndarray
    effective_fraction: np.ndarray
    baseline_displacement: np.ndarray
    lag: float
    lag_method: str
    max_difference: float
    tau: float
    beta: float
    info: dict = field(default_factory=dict)

    def detectability(self, displacement_floor):
        return math.inf if displacement_floor == 0 else self.max_difference / displacement_floor

    def rows(self, stride=1):
        s = slice(None, None, stride)
        return np.column_stack([self.t[s], self.displacement[s], self.force[s],
                                self.effective_fraction[s]])


def _integrate(scenario, t, tau):
    p = scenario.pendulum
    model = _SourceModel(scenario.source, scenario.constants.G)
    traj = scenario.trajectory
    probe = np.asarray(p.equilibrium, float)
    ax = p.unit_axis
    w2, gam = p.omega ** 2, 2 * p.zeta * p.omega

    def drive(tt, ref):
        return float(_true_field(model, traj, tt, probe, ref) @ ax), traj.presence(tt, ref)

    n = len(t)
    x = np.empty(n)
    v = np.empty(n)
    acc = np.empty(n)
    frac = np.empty(n)
    u0, f0 = drive(0.0, None)
    y, q = u0, f0
    x[0] = u0 / w2 if scenario.integration.start == "settled" else 0.0
    v[0] = 0.0
    acc[0], frac[0] = y, q
    xi, vi = x[0], 0.0
    for i in range(n - 1):
        h = t[i + 1] - t[i]
        ref = t[i] + 0.5 * h
        ua, fa = drive(t[i], ref)
        um, fm = drive(t[i] + 0.5 * h, ref)
        ub, fb = drive(t[i + 1], ref)
        d1 = (-3 * ua + 4 * um - ub) / h
        d2 = 4 * (ua - 2 * um + ub) / (h * h)
        g1 = (-3 * fa + 4 * fm - fb) / h
        g2 = 4 * (fa - 2 * fm + fb) / (h * h)
        ym = _relax(y, ua, d1, d2, 0.5 * h, tau)
        yb = _relax(y, ua, d1, d2, h, tau)
        qb = _relax(q, fa, g1, g2, h, tau)
        if tau == 0:
            ym, yb = um, ub
        ya = ua if tau == 0 else y
        k1x, k1v = vi, ya - w2 * xi - gam * vi
        k2x, k2v = vi + 0.5 * h * k1v, ym - w2 * (xi + 0.5 * h * k1x) - gam * (vi + 0.5 * h * k1v)
        k3x, k3v = vi + 0.5 * h * k2v, ym - w2 * (xi + 0.5 * h * k2x) - gam * (vi + 0.5 * h * k2v)
        k4x, k4v = vi + h * k3v, yb - w2 * (xi + h * k3x) - gam * (vi + h * k3v)
        xi += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        vi += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        y, q = yb, qb
        x[i + 1], v[i + 1], acc[i + 1], frac[i + 1] = xi, vi, y, q
    return x, v, acc, frac


def _centroid(t, v):
    num = integrate.trapezoid(t * v, t)
    den = integrate.trapezoid(v, t)
    return num / den


def _phase_lag(t, x, x0, period):
    """Delay of ``x`` behind ``x0`` from their cross-spectral phase at the
    drive frequency, over whole periods in the second half of the run."""
    n_per = int((t[-1] / 2) // period)
    if n_per < 1:
        raise ValueError("run too short for a phase lag: need t_end >= 2 periods")
    t1 = t[-1] - n_per * period
    n = 4096 * n_per
    tu = np.linspace(t1, t[-1], n, endpoint=False)
    w = np.exp(-2j * np.pi * tu / period)
    X = np.mean(np.interp(tu, t, x) * w)
    X0 = np.mean(np.interp(tu, t, x0) * w)
    return float(np.angle(X0 / X)) * period / (2 * np.pi)


def simulate_pendulum(scenario, lag_method="auto"):
    """Integrate the lagged and instantaneous (tau = 0) runs on one grid.

    The lag is the difference of the velocity centroids (exact for a
    linear system driven by a transient) or, for periodic sources, the
    cross-spectral phase delay at the drive frequency.
    """
    scenario.check_timestep()
    tau = scenario.tau
    t = _time_grid(scenario)
    x, v, acc, frac = _integrate(scenario, t, tau)
    if tau == 0:
        x0, v0 = x, v
    else:
        x0, v0, _, _ = _integrate(scenario, t, 0.0)
    if lag_method == "auto":
        lag_method = "phase" if scenario.trajectory.periodic else "centroid"
    if tau == 0:
        lag = 0.0
    elif lag_method == "centroid":
        lag = _centroid(t, v) - _centroid(t, v0)
    else:
        lag = _phase_lag(t, x, x0, scenario.trajectory.period)
    lag = max(lag, 0.0)
    force = scenario.pendulum.mass * acc
    return ResponseRecord(t, x, force, frac, x0, lag, lag_method,
                          float(np.max(np.abs(x - x0))), tau, scenario.beta,
                          dict(n_steps=len(t) - 1))


@dataclass(frozen=True)
class DetectabilityRow:
    tau: float
    max_difference: float
    lag: float
    detectable: bool


def detectability_report(scenarios, time_floor=1e-2, displacement_floor=0.0, workers=None):
    """Table over a family differing only in the lag, in ascending tau.

    A lag is flagged detectable when it reaches ``time_floor`` and the
    response difference reaches ``displacement_floor``.
    """
    from concurrent.futures import ThreadPoolExecutor
    fam = sorted(scenarios, key=lambda s: s.tau)
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            recs = list(ex.map(simulate_pendulum, fam))
    else:
        recs = [simulate_pendulum(s) for s in fam]
    return [DetectabilityRow(r.tau, r.max_difference, r.lag,
                             r.lag >= time_floor and r.max_difference >= displacement_floor)
            for r in recs]
