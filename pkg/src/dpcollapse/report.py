"""CSV, text and manifest artifacts."""

import csv
import hashlib
import io
import json
import os
import platform

import numpy as np

from .errors import ReportError

__all__ = ["format_number", "write_csv", "write_text_report", "write_manifest",
           "file_sha256", "TAGS", "equilibrium_lines", "rate_curve_footer"]

# formula each reported quantity is computed from
TAGS = {
    "catness": "lG2 = 2U(f,f') - U(f,f) - U(f',f')",
    "rate": "rate = lG2 / hbar",
    "lifetime": "tau = hbar / lG2",
    "kappa": "rate = kappa dx^2",
    "const": "kappa hbar / (M omega^2)",
    "omega_G": "omega^2 = 4 pi G rho / 3",
    "omega_G_nucl": "omega^2 = 4 pi G rho_nucl / 3",
    "equilibrium_rate": "rate_eq = omega (mode density)",
    "equilibrium_time": "tau_eq = 1 / omega",
    "localization_width": "dx_eq = sqrt(hbar / (M omega))",
    "saturation_rate": "rate(inf) = -2 U(f,f) / hbar",
    "stationary_var": "Var_x = sqrt(hbar / (8 lambda M))",
    "lag": "tau dg_eff/dt = g - g_eff",
}


def format_number(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17e" % float(v)
    return str(v)


def _ensure_dir(path):
    d = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(d, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {d}: {exc}") from exc


def _write(path, text):
    _ensure_dir(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path


def write_csv(path, header, rows, footer=None):
    """Header row, full-precision rows, then ``# key: value`` comment lines."""
    rows = [list(r) for r in rows]
    if not rows:
        raise ReportError(f"no rows to write for {path}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        if len(r) != len(header):
            raise ReportError(f"row width {len(r)} does not match header width {len(header)}")
        w.writerow([format_number(v) for v in r])
    for k, v in (footer or {}).items():
        buf.write(f"# {k}: {format_number(v)}\r\n")
    return _write(path, buf.getvalue())


def write_text_report(path, title, lines):
    """``lines`` are (label, tag key or None, value, unit) tuples."""
    if not lines:
        raise ReportError(f"no results to report for {path}")
    width = max(len(label) for label, *_ in lines)
    out = [title, "=" * len(title)]
    for label, tag, value, unit in lines:
        t = f"  [{TAGS.get(tag, tag)}]" if tag else ""
        out.append(f"{label.ljust(width)}  {format_number(value)} {unit}".rstrip() + t)
    return _write(path, "\n".join(out) + "\n")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, cfg_data, cfg_hash, constants, seed, artifacts, extra=None):
    """Run manifest: everything needed to reproduce the artifacts, no timestamps."""
    import scipy

    from . import __version__
    base = os.path.dirname(os.path.abspath(path))
    man = {
        "command": command,
        "config_sha256": cfg_hash,
        "config": cfg_data,
        "constants": constants.as_dict(),
        "seed": seed,
        "versions": {"dpcollapse": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "artifacts": {os.path.relpath(a, base): file_sha256(a) for a in sorted(artifacts)},
    }
    if extra:
        man.update(extra)
    return _write(path, json.dumps(man, indent=2, sort_keys=True) + "\n")


def equilibrium_lines(rep):
    return [
        ("mass", None, rep.mass, "kg"),
        ("cutoff mode", None, rep.cutoff_mode, ""),
        ("omega_G", "omega_G", rep.omega_G, "1/s"),
        ("omega_G (nuclear)", "omega_G_nucl", rep.omega_G_nucl, "1/s"),
        ("equilibrium rate", "equilibrium_rate", rep.equilibrium_rate, "1/s"),
        ("equilibrium time", "equilibrium_time", rep.equilibrium_time, "s"),
        ("localization width", "localization_width", rep.localization_width, "m"),
    ]


def rate_curve_footer(curve):
    out = {}
    for k in ("kappa", "fit_residual", "saturation_rate", "const"):
        v = getattr(curve, k)
        if not (isinstance(v, float) and np.isnan(v)):
            out[k] = v
    for k, v in curve.info.items():
        if isinstance(v, (int, float, np.floating, np.integer)):
            out[k] = v
    return out
