"""Scenario configuration: strict JSON parsing, overrides and builders."""

import copy
import hashlib
import json

import jsonschema

from .constants import CONDENSED_DENSITY, NUCLEAR_DENSITY, NUCLEUS_RADIUS, PhysicalConstants
from .errors import ConfigParse, UnknownDensityRef

__all__ = ["SCHEMA", "load_config", "parse_config", "apply_overrides", "config_hash",
           "build_densities", "build_constants", "ScenarioConfig"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_density_decl = {"oneOf": [
    _obj({"type": {"const": "uniform_ball"}, "center": _vec3, "radius": _pos,
          "density": _nonneg, "mass": _pos}, ["type", "radius"]),
    _obj({"type": {"const": "granular_ball"}, "center": _vec3, "radius": _pos,
          "spacing": _pos, "nucleus_radius": _pos, "nucleus_density": _nonneg,
          "lattice_offset": _vec3}, ["type", "radius", "spacing"]),
    _obj({"type": {"const": "desk_granular"}, "radius_in_spacings": _pos,
          "density_ratio": _pos, "spacing": _pos, "nucleus_density": _pos,
          "center": _vec3}, ["type"]),
    _obj({"type": {"const": "smeared_granular"}, "base": {"type": "string"},
          "smear": _pos}, ["type", "base", "smear"]),
    _obj({"type": {"const": "point_set"},
          "positions": {"type": "array", "items": _vec3, "minItems": 1},
          "masses": {"type": "array", "items": _nonneg, "minItems": 1}},
         ["type", "positions", "masses"]),
    _obj({"type": {"const": "voxel_file"}, "path": {"type": "string"}}, ["type", "path"]),
]}

_range = _obj({"start": _pos, "stop": _pos, "num": {"type": "integer", "minimum": 2},
               "log": {"type": "boolean"}}, ["start", "stop", "num"])
_values = {"oneOf": [{"type": "array", "items": _nonneg, "minItems": 1}, _range]}

_pendulum = _obj({"mass": _pos, "omega": _pos, "zeta": _nonneg, "equilibrium": _vec3,
                  "axis": _vec3}, ["mass", "omega", "zeta", "equilibrium"])
_trajectory = {"oneOf": [
    _obj({"type": {"const": "step_removal"}, "position": _vec3, "t0": _nonneg},
         ["type", "position", "t0"]),
    _obj({"type": {"const": "revolution"}, "radius": _pos, "period": _pos,
          "center": _vec3, "phase": _num}, ["type", "radius", "period"]),
    _obj({"type": {"const": "linear_shuttle"}, "start": _vec3, "end": _vec3,
          "period": _pos}, ["type", "start", "end", "period"]),
]}

SCHEMA = _obj({
    "command": {"enum": ["rate", "curve", "equilibrium", "dynamics", "cavendish", "validate"]},
    "constants": _obj({"G": _pos, "hbar": _pos}),
    "densities": {"type": "object", "additionalProperties": _density_decl},
    "output_dir": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "rate": _obj({"density": {"type": "string"},
                  "displacement": {"oneOf": [_pos, _vec3]},
                  "grid_n": {"type": "integer", "minimum": 8}},
                 ["density", "displacement"]),
    "curve": _obj({"variable": {"enum": ["displacement", "smear"]},
                   "density": {"type": "string"}, "values": _values,
                   "displacement": _pos, "grid_n": {"type": "integer", "minimum": 8},
                   "omega": _pos}, ["variable", "density", "values"]),
    "equilibrium": _obj({"masses": {"type": "array", "items": _pos, "minItems": 1},
                         "density": _pos, "nuclear_density": _pos,
                         "modes": {"type": "array", "items": {"enum": ["atomic", "nuclear"]},
                                   "minItems": 1}}, ["masses"]),
    "dynamics": _obj({
        "representation": {"enum": ["moments", "grid", "scaled_universe"]},
        "lambda": {"oneOf": [_nonneg, _obj({"density": {"type": "string"},
                                            "probe": _pos}, ["density"])]},
        "mass": _pos, "dt": _pos, "duration": _pos,
        "initial_var_x": _pos, "cat_separation": _nonneg,
        "grid_points": {"type": "integer", "minimum": 16}, "extent": _pos,
        "realizations": {"type": "integer", "minimum": 1},
        "record_every": {"type": "integer", "minimum": 1},
        "masses": {"type": "array", "items": _pos, "minItems": 1},
        "hbar_factors": {"type": "array", "items": _pos, "minItems": 1},
        "scale": _pos, "matter_density": _pos,
    }, ["representation"]),
    "cavendish": _obj({
        "pendulum": _pendulum, "source": {"type": "string"}, "trajectory": _trajectory,
        "emergence_times": {"type": "array", "items": _nonneg, "minItems": 1},
        "beta": _pos, "collapse_time": _pos,
        "integration": _obj({"t_end": _pos, "dt": _pos,
                             "stride": {"type": "integer", "minimum": 1},
                             "refine_span": _pos,
                             "start": {"enum": ["settled", "rest"]}}, ["t_end", "dt"]),
        "time_floor": _nonneg, "displacement_floor": _nonneg,
    }, ["pendulum", "source", "trajectory", "integration"]),
    "validate": _obj({"quick": {"type": "boolean"}}),
})


def _describe(err):
    if err.validator == "additionalProperties":
        return err.message
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "oneOf" and err.context:
        # the most specific sub-error names the offending key
        best = min(err.context, key=lambda e: (e.validator != "additionalProperties",
                                              -len(e.absolute_path)))
        return f"{path}: {best.message}"
    return f"{path}: {err.message}"


def parse_config(data):
    """Validate a decoded configuration; raise ConfigParse naming the problem."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigParse("; ".join(_describe(e) for e in errors))
    cfg = ScenarioConfig(copy.deepcopy(data))
    cfg.check_refs()
    return cfg


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(apply_overrides(data, overrides))


def apply_overrides(data, overrides):
    """Apply ``key.sub=value`` assignments; values are JSON when they parse."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigParse(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigParse(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return data


def config_hash(data):
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


class ScenarioConfig:
    def __init__(self, data):
        self.data = data

    @property
    def command(self):
        return self.data.get("command")

    @property
    def seed(self):
        return int(self.data.get("seed", 0))

    def block(self, name=None):
        return self.data.get(name or self.command, {})

    def density_refs(self):
        refs = []
        for name, d in self.data.get("densities", {}).items():
            if d["type"] == "smeared_granular":
                refs.append((f"densities.{name}.base", d["base"]))
        b = self.data
        for cmd, key in (("rate", "density"), ("curve", "density"), ("cavendish", "source")):
            if cmd in b and key in b[cmd]:
                refs.append((f"{cmd}.{key}", b[cmd][key]))
        lam = b.get("dynamics", {}).get("lambda")
        if isinstance(lam, dict):
            refs.append(("dynamics.lambda.density", lam["density"]))
        return refs

    def check_refs(self):
        known = set(self.data.get("densities", {}))
        for where, ref in self.density_refs():
            if ref not in known:
                raise UnknownDensityRef(f"{where} refers to undeclared density {ref!r}")

    def hash(self):
        return config_hash(self.data)


def build_constants(cfg):
    return PhysicalConstants(**cfg.data.get("constants", {}))


def build_densities(cfg, base_dir="."):
    """Instantiate every declared density, resolving references."""
    import os

    from .density import (GranularBall, PointSet, SmearedGranular, UniformBall,
                          read_voxel_grid)
    decls = cfg.data.get("densities", {})
    out = {}

    def make(name, stack=()):
        if name in out:
            return out[name]
        if name in stack:
            raise ConfigParse(f"density {name!r} refers to itself")
        d = dict(decls[name])
        kind = d.pop("type")
        if kind == "uniform_ball":
            c = d.get("center", (0, 0, 0))
            if "mass" in d and "density" in d:
                raise ConfigParse(f"densities.{name}: give mass or density, not both")
            if "mass" in d:
                obj = UniformBall.from_mass(d["mass"], d["radius"], c)
            else:
                obj = UniformBall(c, d["radius"], d.get("density", CONDENSED_DENSITY))
        elif kind == "granular_ball":
            obj = GranularBall(d.get("center", (0, 0, 0)), d["radius"], d["spacing"],
                               d.get("nucleus_radius", NUCLEUS_RADIUS),
                               d.get("nucleus_density", NUCLEAR_DENSITY),
                               d.get("lattice_offset", (0, 0, 0)))
        elif kind == "desk_granular":
            obj = GranularBall.desk_scale(**d)
        elif kind == "smeared_granular":
            base = make(d["base"], stack + (name,))
            if not isinstance(base, GranularBall):
                raise ConfigParse(f"densities.{name}: base must be a granular ball")
            obj = SmearedGranular(base, d["smear"])
        elif kind == "point_set":
            obj = PointSet(d["positions"], d["masses"])
        else:
            obj = read_voxel_grid(os.path.join(base_dir, d["path"]))
        out[name] = obj
        return obj

    for name in decls:
        try:
            make(name)
        except ValueError as exc:
            raise ConfigParse(f"densities.{name}: {exc}") from exc
    return out

