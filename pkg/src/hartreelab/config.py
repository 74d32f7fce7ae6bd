"""Experiment configuration: strict YAML schema, validation, round-tripping.

Configs are plain mappings.  Parsing fills defaults and rejects unknown keys
(silently misspelled physics parameters are the classic way to lose a day);
serialization emits canonical YAML, and parse(serialize(parse(text))) is the
identity on the normalized form.  Validation failures carry the dotted key
path; YAML syntax errors keep the line/column from the parser.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass

import numpy as np
import yaml

from .grid import Lattice
from .potentials import (ExternalPotential, KineticKind, TwoBodyPotential,
                         EXTERNAL_KINDS, TWOBODY_KINDS)

__all__ = ["ExperimentConfig", "ConfigError", "parse", "serialize", "config_hash"]

SUBCOMMANDS = ("evolve", "groundstate", "linearize", "newtonian", "trapdance",
               "manybody", "blowup", "stability")


class ConfigError(ValueError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


_SCHEMAS = {
    "lattice": {"d": (_num, 3), "n": (_num, 64), "half_width": (_num, 8.0)},
    "potential.external": {
        "kind": (str, "zero"), "lambda": (_num, 0.0), "depth": (_num, 1.0),
        "width": (_num, 1.0), "separation": (_num, 2.0), "eps": (_num, 1.0),
        "base": (dict, None),
    },
    "potential.twobody": {
        "kind": (str, "gaussian"), "nu": (_num, 0.0), "sign": (_num, -1),
        "sigma": (_num, 1.0), "mu": (_num, 1.0), "width": (_num, 1.0),
        "amplitude": (_num, 1.0), "gauge": (str, "matched"),
        "short": (dict, None), "long": (dict, None), "eps": (_num, 1.0),
    },
    "kinetic": {"kind": (str, "nonrelativistic"), "mass": (_num, 1.0)},
    "run": {
        "dt": (_num, 1e-3), "t_end": (_num, 1.0), "record_every": (_num, 100),
        "snapshot_every": (_num, 0), "seed": (_num, 0), "tol": (_num, 1e-8),
        "threads": (_num, 0), "blowup_gradnorm_factor": (_num, 1e3),
        "dt_floor": (_num, 1e-7), "adaptive": (bool, False),
    },
    "initial": {
        "kind": (str, "gaussian"), "width": (_num, 1.0), "charge": (_num, 1.0),
        "center": (list, None), "velocity": (list, None), "path": (str, ""),
        "phase": (_num, 0.0),
    },
    "groundstate": {"charges": (list, [1.0]), "omegas": (list, None),
                    "multi_seed": (_num, 0)},
    "linearize": {"count": (_num, 8), "groundstate_path": (str, "")},
    "trapdance": {"x0": (list, [1.0, 0.0, 0.0]), "p0": (list, [0.0, 0.0, 0.0]),
                  "periods": (_num, 1.0)},
    "newtonian": {
        "eps": (_num, 0.05), "bodies": (list, []),
        "window_radius_factor": (_num, 4.0), "ode_dt": (_num, 1e-3),
    },
    "manybody": {
        "sites": (_num, 8), "numbers": (list, [2, 3, 4, 5, 6]),
        "time": (_num, 1.0), "initial_width": (_num, 1.0),
        "probe_number": (_num, 0),
    },
    "stability": {"delta": (_num, 1e-3), "horizon": (_num, 10.0),
                  "charge": (_num, 3.0), "boost_velocity": (list, None),
                  "perturbation_seed": (_num, 1)},
    "blowup": {"mass_eps": (_num, 0.05), "omega": (_num, 1.0),
               "horizon": (_num, 4.0), "gradnorm_factor": (_num, 4.0)},
}

_TOP_KEYS = ("subcommand", "lattice", "potential", "kinetic", "run", "initial",
             "groundstate", "linearize", "trapdance", "newtonian", "manybody",
             "stability", "blowup", "output")


def _check_block(block, schema, path, errors):
    out = {}
    if block is None:
        block = {}
    if not isinstance(block, dict):
        errors.append(f"{path}: expected a mapping")
        return out
    for key in block:
        if key not in schema:
            errors.append(f"{path}.{key}: unknown key")
    for key, (typ, default) in schema.items():
        if key in block:
            val = block[key]
            ok = typ(val) if callable(typ) and not isinstance(typ, type) \
                else isinstance(val, typ)
            if val is not None and not ok:
                errors.append(f"{path}.{key}: bad type {type(val).__name__}")
                val = default
        else:
            val = default
        out[key] = val
    return out


def _normalize(raw) -> dict:
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    for key in raw:
        if key not in _TOP_KEYS:
            errors.append(f"{key}: unknown top-level key")
    sub = raw.get("subcommand")
    if sub not in SUBCOMMANDS:
        errors.append(f"subcommand: must be one of {SUBCOMMANDS}, got {sub!r}")
    cfg = {"subcommand": sub, "output": raw.get("output") or ""}
    if not isinstance(cfg["output"], str):
        errors.append("output: expected a string")
        cfg["output"] = ""
    cfg["lattice"] = _check_block(raw.get("lattice"), _SCHEMAS["lattice"],
                                  "lattice", errors)
    pot = raw.get("potential") or {}
    if not isinstance(pot, dict):
        errors.append("potential: expected a mapping")
        pot = {}
    for key in pot:
        if key not in ("external", "twobody"):
            errors.append(f"potential.{key}: unknown key")
    cfg["potential"] = {
        "external": _check_block(pot.get("external"),
                                 _SCHEMAS["potential.external"],
                                 "potential.external", errors),
        "twobody": _check_block(pot.get("twobody"),
                                _SCHEMAS["potential.twobody"],
                                "potential.twobody", errors),
    }
    for name in ("kinetic", "run", "initial", "groundstate", "linearize",
                 "trapdance", "newtonian", "manybody", "stability", "blowup"):
        cfg[name] = _check_block(raw.get(name), _SCHEMAS[name], name, errors)

    _validate_physics(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _validate_physics(cfg, errors):
    lat = cfg["lattice"]
    n = lat["n"]
    if not (isinstance(n, int) and n >= 8 and (n & (n - 1)) == 0):
        errors.append("lattice.n: must be a power of two >= 8")
    if lat["d"] not in (1, 2, 3):
        errors.append("lattice.d: must be 1, 2 or 3")
    if lat["half_width"] <= 0:
        errors.append("lattice.half_width: must be positive")
    ext = cfg["potential"]["external"]
    if ext["kind"] not in EXTERNAL_KINDS:
        errors.append(f"potential.external.kind: unknown kind {ext['kind']!r}")
    if ext["lambda"] < 0:
        errors.append("potential.external.lambda: must be nonnegative")
    two = cfg["potential"]["twobody"]
    if two["kind"] not in TWOBODY_KINDS:
        errors.append(f"potential.twobody.kind: unknown kind {two['kind']!r}")
    if two["nu"] < 0:
        errors.append("potential.twobody.nu: must be nonnegative")
    if two["sign"] not in (-1, 1):
        errors.append("potential.twobody.sign: must be -1 or +1")
    if two["kind"] == "power_law" and not (0 < two["sigma"] < 3):
        errors.append("potential.twobody.sigma: must lie in (0, 3)")
    run = cfg["run"]
    for key in ("dt", "t_end", "tol"):
        if run[key] <= 0:
            errors.append(f"run.{key}: must be positive")
    if run["record_every"] < 1:
        errors.append("run.record_every: must be >= 1")
    if cfg["subcommand"] == "groundstate" and two["kind"] == "power_law" \
            and two["sigma"] >= 2 and two["nu"] > 0:
        errors.append(
            "groundstate with power_law sigma >= 2: the energy is not bounded "
            "from below on the charge sphere; use the blowup subcommand's "
            "fixed-point critical point instead")


def parse(text: str) -> "ExperimentConfig":
    """Parse and validate config text; raises ConfigError with precise paths
    (YAML syntax errors keep their line/column)."""
    try:
        raw = yaml.safe_load(io.StringIO(text))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML syntax error{where}: {getattr(exc, 'problem', exc)}")
    return ExperimentConfig(_normalize(raw))


def serialize(cfg: "ExperimentConfig") -> str:
    return yaml.safe_dump(cfg.data, sort_keys=True, default_flow_style=False)


def config_hash(cfg: "ExperimentConfig") -> str:
    return hashlib.sha256(serialize(cfg).encode()).hexdigest()


@dataclass
class ExperimentConfig:
    """Normalized configuration with typed accessors."""

    data: dict

    @property
    def subcommand(self) -> str:
        return self.data["subcommand"]

    def lattice(self) -> Lattice:
        lat = self.data["lattice"]
        return Lattice(int(lat["d"]), int(lat["n"]), float(lat["half_width"]))

    def external(self) -> ExternalPotential:
        return _external_from(self.data["potential"]["external"])

    def twobody(self) -> TwoBodyPotential:
        return _twobody_from(self.data["potential"]["twobody"])

    def kinetic(self) -> KineticKind:
        k = self.data["kinetic"]
        return KineticKind(kind=k["kind"], mass=float(k["mass"]))

    def block(self, name) -> dict:
        return self.data[name]

    def vector(self, block, key, d, default=0.0) -> np.ndarray:
        val = self.data[block].get(key)
        if val is None:
            return np.full(d, default)
        v = np.asarray([float(x) for x in val])
        if v.size != d:
            raise ConfigError(f"{block}.{key}: expected {d} components")
        return v


def _external_from(blk) -> ExternalPotential:
    base = None
    if blk.get("base"):
        inner = dict(_SCHEMAS["potential.external"])
        errors = []
        base_blk = _check_block(blk["base"], _SCHEMAS["potential.external"],
                                "potential.external.base", errors)
        if errors:
            raise ConfigError(errors)
        base_blk["lambda"] = 1.0
        base = _external_from(base_blk)
    return ExternalPotential(
        kind=blk["kind"], lam=float(blk["lambda"]), depth=float(blk["depth"]),
        width=float(blk["width"]), separation=float(blk["separation"]),
        eps=float(blk["eps"]), base=base,
    )


def _twobody_from(blk) -> TwoBodyPotential:
    short = long = None
    if blk.get("short") or blk.get("long"):
        errors = []
        sblk = _check_block(blk.get("short"), _SCHEMAS["potential.twobody"],
                            "potential.twobody.short", errors)
        lblk = _check_block(blk.get("long"), _SCHEMAS["potential.twobody"],
                            "potential.twobody.long", errors)
        if errors:
            raise ConfigError(errors)
        short = _twobody_from(sblk)
        long = _twobody_from(lblk)
    return TwoBodyPotential(
        kind=blk["kind"], nu=float(blk["nu"]), sign=int(blk["sign"]),
        sigma=float(blk["sigma"]), mu=float(blk["mu"]),
        width=float(blk["width"]), amplitude=float(blk["amplitude"]),
        gauge=blk["gauge"], short=short, long=long, eps=float(blk["eps"]),
    )
