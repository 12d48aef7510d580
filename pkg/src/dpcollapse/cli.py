"""Command-line front end.

    dpcollapse <command> --config <path> [--out <dir>] [--seed <n>]
               [--threads <n>] [--set key=value ...]

Exit codes: 0 success, 1 validation failures, 2 configuration error,
3 numerical error, 4 io error.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .errors import ConfigError, DPCollapseError, NumericalError, ReportError

COMMANDS = ("rate", "curve", "equilibrium", "dynamics", "cavendish", "validate")

LAG_HEADER = ("Delay model: the effective source configuration relaxes to the true one, "
              "tau dg_eff/dt = g - g_eff; tau = beta * collapse time (beta printed below).")


def _values(spec):
    if isinstance(spec, list):
        return np.asarray(spec, float)
    f = np.geomspace if spec.get("log", True) else np.linspace
    return f(spec["start"], spec["stop"], spec["num"])


def _reference_omega(dist):
    from .density import GranularBall, SmearedGranular, UniformBall
    from .equilibrium import newton_frequency
    if isinstance(dist, UniformBall):
        return newton_frequency(dist.density)
    if isinstance(dist, GranularBall):
        return newton_frequency(dist.nucleus_density)
    if isinstance(dist, SmearedGranular):
        return newton_frequency(dist.base.mean_density)
    return math.nan


class Runner:
    def __init__(self, cfg, out, seed, threads, base_dir):
        from .config import build_constants, build_densities
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.workers = threads
        self.constants = build_constants(cfg)
        self.densities = build_densities(cfg, base_dir)
        self.artifacts = []
        self.extra = {}

    def path(self, name):
        return os.path.join(self.out, name)

    def csv(self, name, header, rows, footer=None):
        from .report import write_csv
        self.artifacts.append(write_csv(self.path(name), header, rows, footer))

    def text(self, name, title, lines):
        from .report import write_text_report
        self.artifacts.append(write_text_report(self.path(name), title, lines))

    # ------------------------------------------------------------------
    def rate(self):
        from .collapse import quadratic_coefficient, rate_displaced
        b = self.cfg.block("rate")
        f = self.densities[b["density"]]
        dx = b["displacement"]
        res = rate_displaced(f, dx, self.constants, b.get("grid_n", 64))
        d = float(np.linalg.norm(np.atleast_1d(dx)))
        w = _reference_omega(f)
        const = quadratic_coefficient(res.rate / d ** 2, f.total_mass, w, self.constants.hbar)
        self.csv("rate.csv",
                 ["displacement", "catness", "rate", "lifetime", "U_ff", "U_ffp", "U_fpfp",
                  "method", "estimated_error", "const"],
                 [[d, res.lG2, res.rate, res.lifetime, res.U_ff, res.U_ffp, res.U_fpfp,
                   res.method, res.estimated_error, const]])
        self.text("rate.txt", "Collapse rate", [
            ("displacement", None, d, "m"), ("catness", "catness", res.lG2, "J"),
            ("rate", "rate", res.rate, "1/s"), ("lifetime", "lifetime", res.lifetime, "s"),
            ("kappa hbar/(M omega^2)", "const", const, "")])
        return 0

    def curve(self):
        from .collapse import full_rate_curve, rate_vs_smearing
        from .density import GranularBall
        from .errors import UnsupportedGeometry
        from .report import rate_curve_footer
        b = self.cfg.block("curve")
        f = self.densities[b["density"]]
        xs = _values(b["values"])
        if b["variable"] == "displacement":
            c = full_rate_curve(f, xs, self.constants, b.get("grid_n", 64), b.get("omega"))
            self.csv("rate_curve.csv", ["displacement", "rate"], c.rows(), rate_curve_footer(c))
            self.text("rate_curve.txt", "Rate curve", [
                ("kappa", "kappa", c.kappa, "1/(s m^2)"),
                ("kappa hbar/(M omega^2)", "const", c.const, ""),
                ("fit residual", None, c.fit_residual, ""),
                ("saturation rate", "saturation_rate", c.saturation_rate, "1/s")])
        else:
            if not isinstance(f, GranularBall):
                raise UnsupportedGeometry("smearing curves need a granular ball density")
            dx = b.get("displacement")
            if dx is None:
                pos = xs[xs > 0]
                dx = min(f.nucleus_radius, float(pos.min()) if len(pos) else math.inf) / 10
            c = rate_vs_smearing(f, xs, dx, self.constants)
            self.csv("smearing_curve.csv", ["smear", "rate"], c.rows(), rate_curve_footer(c))
        return 0

    def equilibrium(self):
        from .constants import CONDENSED_DENSITY, NUCLEAR_DENSITY
        from .equilibrium import equilibrium_report
        from .report import equilibrium_lines
        b = self.cfg.block("equilibrium")
        rho = b.get("density", CONDENSED_DENSITY)
        rn = b.get("nuclear_density", NUCLEAR_DENSITY)
        rows, lines = [], []
        for M in b["masses"]:
            for mode in b.get("modes", ["atomic", "nuclear"]):
                rep = equilibrium_report(M, rho, rn, mode, self.constants)
                rows.append([M, mode, rep.omega_G, rep.omega_G_nucl, rep.equilibrium_rate,
                             rep.equilibrium_time, rep.localization_width])
                lines.extend(equilibrium_lines(rep))
        self.csv("equilibrium.csv", ["mass", "mode", "omega_G", "omega_G_nucl",
                                     "equilibrium_rate", "equilibrium_time", "width"], rows)
        self.text("equilibrium.txt", "Equilibrium collapse", lines)
        return 0

    def _collapse_params(self, b):
        from .dynamics import CollapseModelParams
        lam = b.get("lambda")
        if isinstance(lam, dict):
            f = self.densities[lam["density"]]
            p = CollapseModelParams.from_distribution(f, b["dt"], self.constants,
                                                      lam.get("probe"), self.seed)
            if "mass" in b:
                p = CollapseModelParams(p.lam, b["mass"], p.dt, p.seed)
            return p
        if lam is None or "mass" not in b:
            raise ConfigError("dynamics needs lambda and mass (or lambda.density)")
        return CollapseModelParams(lam, b["mass"], b["dt"], self.seed)

    def dynamics(self):
        from . import dynamics as dyn
        b = self.cfg.block("dynamics")
        rep = b["representation"]
        hbar = self.constants.hbar
        if rep == "scaled_universe":
            kw = {k: b[k] for k in ("masses", "hbar_factors", "realizations", "scale")
                  if k in b}
            if "matter_density" in b:
                kw["density"] = b["matter_density"]
            rows = dyn.scaled_universe_run(seed=self.seed, constants=self.constants,
                                           workers=self.workers, **kw)
            self.csv("scaled_universe.csv",
                     ["mass", "hbar", "omega", "lambda", "method", "predicted_var",
                      "stationary_var", "var_wide", "var_narrow", "relaxation_rate"],
                     [[r.mass, r.hbar, r.omega, r.lam, r.method, r.predicted_var,
                       r.stationary_var, r.var_wide, r.var_narrow, r.relaxation_rate]
                      for r in rows])
            return 0
        for key in ("dt", "duration"):
            if key not in b:
                raise ConfigError(f"dynamics.{key} is required")
        p = self._collapse_params(b)
        T = b["duration"]
        if "initial_var_x" in b:
            v0 = b["initial_var_x"]
        elif p.lam > 0:
            v0 = 4 * dyn.stationary_moments(p, hbar).var_x
        else:
            raise ConfigError("dynamics.initial_var_x is required when lambda = 0")
        footer = {"lambda": p.lam, "mass": p.mass, "dt": p.dt, "seed": p.seed}
        if p.lam > 0:
            footer["stationary_var"] = dyn.stationary_moments(p, hbar).var_x
        if rep == "moments":
            tr = dyn.evolve_moments(p, dyn.GaussianMoments.minimum_uncertainty(v0, hbar), T,
                                    hbar, b.get("record_every", 1))
            self.csv("moments.csv", ["t", "var_x", "var_p", "cov_xp"],
                     np.column_stack([tr.t, tr.var_x, tr.var_p, tr.cov_xp]), footer)
            return 0
        if "grid_points" not in b or "extent" not in b:
            raise ConfigError("grid dynamics needs grid_points and extent")
        x = np.linspace(-b["extent"] / 2, b["extent"] / 2, b["grid_points"], endpoint=False)
        d = b.get("cat_separation", 0.0)
        sig = math.sqrt(v0)
        psi0 = dyn.cat_state(x, d, sig) if d > 0 else dyn.gaussian_packet(x, 0.0, sig, hbar=hbar)
        e = dyn.evolve_grid_stochastic(p, psi0, x, T, b.get("realizations", 200), hbar,
                                       coherence_separation=d if d > 0 else None,
                                       record_every=b.get("record_every", 10),
                                       workers=self.workers)
        coh = e.coherence if len(e.coherence) else np.full(len(e.t), np.nan)
        footer.update(max_norm_drift=e.max_norm_drift, realizations=e.info["realizations"])
        if d > 0:
            footer["coherence_rate"] = e.coherence_rate()
            footer["expected_rate"] = p.lam * d * d
            footer["branch_left"] = int(np.sum(e.prob_left > 0.5))
        self.csv("ensemble.csv", ["t", "var_x", "var_p", "coherence", "mean_kinetic"],
                 np.column_stack([e.t, e.mean_var_x, e.mean_var_p, coh, e.mean_kinetic]), footer)
        return 0

    def cavendish(self):
        from . import cavendish as cav
        b = self.cfg.block("cavendish")
        pd = b["pendulum"]
        pend = cav.Pendulum(pd["mass"], pd["omega"], pd["zeta"], tuple(pd["equilibrium"]),
                            tuple(pd.get("axis", (1.0, 0.0, 0.0))))
        td = dict(b["trajectory"])
        kind = td.pop("type")
        cls = {"step_removal": cav.StepRemoval, "revolution": cav.Revolution,
               "linear_shuttle": cav.LinearShuttle}[kind]
        traj = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in td.items()})
        ig = b["integration"]
        ctl = cav.IntegrationControls(ig["t_end"], ig["dt"], ig.get("stride", 1),
                                      ig.get("refine_span", 30.0), ig.get("start", "settled"))
        beta = b.get("beta", 1.0)
        src = self.densities[b["source"]]
        if "emergence_times" in b:
            fam = [cav.CavendishScenario(pend, src, traj, ctl, emergence_time=t, beta=beta,
                                         constants=self.constants)
                   for t in b["emergence_times"]]
        elif "collapse_time" in b:
            fam = [cav.CavendishScenario(pend, src, traj, ctl, beta=beta,
                                         collapse_time=b["collapse_time"],
                                         constants=self.constants)]
        else:
            raise ConfigError("cavendish needs emergence_times or collapse_time")
        fam.sort(key=lambda s: s.tau)
        floor = b.get("time_floor", 1e-2)
        dfloor = b.get("displacement_floor", 0.0)
        rows = []
        for sc in fam:
            rec = cav.simulate_pendulum(sc)
            det = rec.lag >= floor and rec.max_difference >= dfloor
            rows.append([sc.tau, rec.max_difference, rec.lag, det])
            self.csv(f"response_tau_{sc.tau:.6g}.csv",
                     ["t", "theta", "force", "g_eff_fraction"], rec.rows(ctl.stride),
                     {"tau": sc.tau, "beta": beta, "lag": rec.lag, "lag_method": rec.lag_method,
                      "baseline": "tau = 0"})
        self.csv("detectability.csv", ["tau", "max_difference", "lag", "detectable"], rows,
                 {"time_floor": floor, "displacement_floor": dfloor, "beta": beta})
        lines = [("beta", None, beta, ""), ("time floor", None, floor, "s")]
        for tau, diff, lag, det in rows:
            lines.append((f"lag at tau = {tau:g} s", "lag", lag, "s"))
            lines.append((f"detectable at tau = {tau:g} s", None, det, ""))
        from .report import write_text_report
        path = self.path("cavendish.txt")
        self.artifacts.append(write_text_report(path, "Delayed-field pendulum", lines))
        with open(path) as fh:
            body = fh.read()
        with open(path, "w") as fh:
            fh.write(LAG_HEADER + "\n\n" + body)
        return 0

    def validate(self, log):
        from .validation import run_validation
        quick = self.cfg.block("validate").get("quick", False)
        results = run_validation(self.out, self.seed, quick, self.workers, log=log)
        for r in results:
            self.artifacts.extend(r.artifacts)
        rows = []
        for r in results:
            for label, value, ok, target in r.conditions:
                rows.append([r.number, r.name, label, float(value) if not isinstance(value, bool)
                             else value, target, ok])
        self.csv("validation_summary.csv",
                 ["criterion", "name", "condition", "value", "target", "pass"], rows)
        lines = [(f"{r.number:2d} {r.name}", None, r.summary(), "") for r in results]
        self.text("validation_summary.txt", "Validation", lines)
        self.extra["validation"] = {str(r.number): r.passed for r in results}
        return 0 if all(r.passed for r in results) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="dpcollapse", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON scenario file (optional for validate)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (dotted key, JSON value)")
    return p


def run(argv=None, log=print):
    from .config import apply_overrides, load_config, parse_config
    from .report import write_manifest
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config, args.set)
            base = os.path.dirname(os.path.abspath(args.config))
        elif args.command == "validate":
            cfg = parse_config(apply_overrides({"command": "validate"}, args.set))
            base = os.getcwd()
        else:
            raise ConfigError(f"{args.command} needs --config")
        declared = cfg.data.get("command")
        if declared is not None and declared != args.command:
            raise ConfigError(f"config declares command {declared!r}, "
                              f"but {args.command!r} was requested")
        cfg.data["command"] = args.command
        seed = args.seed if args.seed is not None else cfg.seed
        out = args.out or cfg.data.get("output_dir", "dpcollapse_out")
        runner = Runner(cfg, out, seed, args.threads, base)
        if args.command == "validate":
            status = runner.validate(log)
        else:
            status = getattr(runner, args.command)()
        man = write_manifest(os.path.join(out, "manifest.json"), args.command, cfg.data,
                             cfg.hash(), runner.constants, seed, runner.artifacts,
                             runner.extra or None)
        log(f"wrote {len(runner.artifacts)} artifacts and {man}")
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    except NumericalError as exc:
        print(f"numerical error [{type(exc).__module__}.{type(exc).__name__}]: {exc}",
              file=sys.stderr)
        return exc.exit_code
    except (ReportError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except DPCollapseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # invalid physical parameters reaching a constructor
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
