"""Scenario files: a sectioned key-value format with a strict schema.

A scenario is an INI file whose values are JSON literals (bare words are
read as strings)::

    [scenario]
    name = free-evolution
    kind = evolve
    schema_version = 1
    seed = 7

    [grid]
    points = 1024

Sections are ``scenario`` (required), ``grid``, ``frame``, ``potential``,
``run`` and ``output``.  Each kind fills its own defaults, notably for
``run``; :meth:`Scenario.echo` writes the fully resolved file back out.
Unknown keys are errors in strict mode and warnings otherwise.
"""

from __future__ import annotations

import configparser
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from scatterlab.errors import ConfigError

SCHEMA_VERSION = 1
KINDS = ("evolve", "localtime", "propdecay", "waveop", "eikonal", "partition",
         "uncertainty", "xsection", "localmotion")
SECTIONS = ("scenario", "grid", "frame", "potential", "run", "output")
REQUIRED = object()


class ScenarioError(ConfigError):
    """Field-level validation failure; ``errors`` lists every problem."""

    def __init__(self, errors, source: str = "scenario"):
        self.errors = list(errors)
        super().__init__(f"{source}: " + "; ".join(self.errors))


class SchemaWarning(UserWarning):
    """Unknown key accepted outside strict mode."""


# ----------------------------------------------------------------------------
# value casters: each returns the value or raises ValueError with a reason
# ----------------------------------------------------------------------------

def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError("must be an integer")
    return v


def _pos_int(v):
    v = _int(v)
    if v <= 0:
        raise ValueError("must be positive")
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValueError("must be a finite number")
    return float(v)


def _pos(v):
    v = _float(v)
    if v <= 0:
        raise ValueError("must be positive")
    return v


def _nonneg(v):
    v = _float(v)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise ValueError("must be true or false")
    return v


def _str(v):
    if not isinstance(v, str) or not v:
        raise ValueError("must be a nonempty string")
    return v


def _u64(v):
    v = _int(v)
    if not 0 <= v < 2**64:
        raise ValueError("must be an unsigned 64-bit integer")
    return v


def _list(item):
    def cast(v):
        if not isinstance(v, list):
            raise ValueError("must be a list")
        return [item(x) for x in v]
    return cast


def _opt(caster):
    def cast(v):
        return None if v is None else caster(v)
    return cast


def _matrix(v):
    if not isinstance(v, list) or not v or not all(isinstance(r, list) and len(r) == len(v) for r in v):
        raise ValueError("must be a square matrix (list of rows)")
    return [[_float(x) for x in r] for r in v]


def _dict(v):
    if not isinstance(v, dict):
        raise ValueError("must be a JSON object")
    return {str(k): _float(x) for k, x in v.items()}


def _kind(v):
    if v not in KINDS:
        raise ValueError(f"must be one of {', '.join(KINDS)}")
    return v


def _masses(v):
    v = _list(_float)(v)
    if len(v) < 1:
        raise ValueError("needs at least one mass")
    if any(m <= 0 for m in v):
        raise ValueError("masses must be positive")
    return v


def _power_of_two(v):
    v = _pos_int(v)
    if v & (v - 1):
        raise ValueError("must be a power of two")
    return v


# ----------------------------------------------------------------------------
# schema
# ----------------------------------------------------------------------------

_BASE = {
    "scenario": {"name": (_str, REQUIRED), "kind": (_kind, REQUIRED),
                 "schema_version": (_int, REQUIRED), "seed": (_u64, REQUIRED),
                 "description": (str, "")},
    "grid": {"dim": (_pos_int, 1), "points": (_power_of_two, 1024), "L": (_pos, 40.0), "hbar": (_pos, 1.0)},
    "frame": {"masses": (_opt(_masses), None), "dimension": (_pos_int, 1)},
    "potential": {"kind": (_str, "zero"), "params": (_dict, {}), "soft": (_opt(_pos), None)},
    "output": {"dir": (str, "")},
}

_RUN = {
    "evolve": {
        "t": (_float, 2.0), "sigma": (_pos, 1.0), "mass": (_pos, 1.0), "closed_form_tol": (_pos, 1e-8),
        "dft_cases": (_list(_list(_pos_int)), [[1, 4096], [3, 256]]), "dft_tol": (_pos, 1e-12),
        "dft_seconds": (_pos, 10.0), "plancherel_states": (_pos_int, 5), "plancherel_tol": (_pos, 1e-6),
        "far_field": (_bool, True), "far_field_tol": (_pos, 0.05),
        "far_field_radii": (_list(_pos), [4.0, 8.0, 16.0, 24.0, 30.0]),
    },
    "localtime": {
        "mass": (_pos, 1.3), "x0": (_float, 1.0), "k0": (_float, 2.0), "sigma": (_pos, 1.0), "dt": (_pos, 0.5),
        "times": (_list(_pos), [float(t) for t in range(1, 51)]), "closed_form_tol": (_pos, 1e-8),
        "slope_tol": (_pos, 0.05), "interacting_k0": (_float, 1.5), "interacting_dt": (_pos, 0.05),
        "window_times": (_list(_pos), [5.0 + 5.0 * i for i in range(10)]),
        "eigen_points": (_power_of_two, 256), "eigen_L": (_pos, 20.0), "eigen_depth": (_pos, 5.0),
        "eigen_dt": (_pos, 0.01), "flat_tol": (_pos, 0.05),
    },
    "propdecay": {
        "t_min": (_pos, 5.0), "t_max": (_pos, 50.0), "t_count": (_pos_int, 12), "probes": (_pos_int, 16),
        "propa1_s": (_list(_nonneg), [1.0, 2.0]), "propa3_s": (_list(_nonneg), [2.0]), "slope_tol": (_pos, 0.2),
    },
    "waveop": {
        "mode": (_str, "short"), "dt": (_pos, 0.05), "T": (_pos, 40.0),
        "x0": (_float, 0.0), "k0": (_float, 2.0), "sigma": (_pos, 2.0),
        "isometry_tol": (_pos, 1e-6), "power_slack": (_pos, 0.2),
        "window": (_list(_float), [1.0, 3.0]), "ramp": (_pos, 0.75), "intertwining_tol": (_pos, 1e-3),
        "fc_x0": (_float, -20.0), "fc_k0": (_float, 2.0), "fc_sigma": (_pos, 4.0), "completeness_tol": (_pos, 1e-2),
        "self_convergence": (_bool, True),
        "rho": (_pos, 0.1), "d": (_pos, 1.0), "R0": (_pos, 16.0), "ratio_min": (_pos, 10.0),
    },
    "eikonal": {
        "rho": (_pos, 0.25), "d": (_pos, 0.5), "R0": (_pos, 16.0), "space_dim": (_pos_int, 2),
        "samples": (_pos_int, 1000), "residual_tol": (_pos, 1e-4), "orbits": (_pos_int, 8),
        "orbit_time": (_pos, 40.0), "orbit_tol": (_pos, 1e-8), "free_samples": (_pos_int, 200),
    },
    "partition": {
        "bodies": (_list(_pos_int), [3, 4]), "gamma": (_pos, 1.05), "samples": (_pos_int, 10000),
        "sum_tol": (_pos, 1e-10),
    },
    "uncertainty": {
        "states": (_pos_int, 100), "floor": (_pos, 1e-10), "hermite_tol": (_pos, 1e-8),
        "te_states": (_pos_int, 50), "te_points": (_power_of_two, 32), "te_L": (_pos, 12.0),
        "te_t": (_float, 2.0), "te_floor": (_pos, 1e-6),
    },
    "xsection": {
        "Z": (_float, 1.0), "e": (_pos, 1.0), "E": (_pos, 1.0), "theta": (_pos, math.pi / 2),
        "kappas": (_list(_pos), [1e-1, 1e-2, 1e-3]), "screen_tol": (_pos, 1e-2), "v": (_nonneg, 0.1),
        "small_v": (_list(_pos), [1e-1, 1e-2, 1e-3]), "clock_mass": (_pos, 1.0), "clock_beta": (_nonneg, 0.6),
        "planck_tol": (_pos, 1e-12),
    },
    "localmotion": {
        "H_L": (_matrix, [[0.0, 0.0], [0.0, 1.0]]), "H_E": (_matrix, [[0.0, 0.0], [0.0, 2.0]]),
        "coupling_L": (_matrix, [[0.0, 1.0], [1.0, 0.0]]), "coupling_E": (_matrix, [[0.0, 1.0], [1.0, 0.0]]),
        "eps": (_list(_pos), [0.1, 0.05, 0.025]), "constant": (_float, 0.7),
        "witness_min": (_pos, 1e-6), "zero_tol": (_pos, 1e-12), "scaling_tol": (_pos, 0.05),
    },
}

# kind-specific defaults outside [run]
_KIND_DEFAULTS = {
    "localtime": {"grid": {"points": 4096, "L": 400.0}, "potential": {"kind": "gaussian", "params": {"V0": -1.0, "width": 1.0}}},
    "propdecay": {"grid": {"points": 8192, "L": 512.0}},
    "waveop": {"grid": {"points": 1024, "L": 256.0}, "potential": {"kind": "gaussian", "params": {"V0": -1.0, "width": 1.0}}},
    "eikonal": {"potential": {"kind": "soft-coulomb", "params": {"Z": 0.2}, "soft": 1.0}},
    "partition": {"frame": {"dimension": 3}},
}


def _literal(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


@dataclass
class Scenario:
    """A validated scenario with every default filled in."""

    name: str
    kind: str
    seed: int
    schema_version: int
    sections: dict
    warnings: list = field(default_factory=list)
    path: str | None = None

    @property
    def grid(self) -> dict:
        return self.sections["grid"]

    @property
    def frame(self) -> dict:
        return self.sections["frame"]

    @property
    def potential(self) -> dict:
        return self.sections["potential"]

    @property
    def run(self) -> dict:
        return self.sections["run"]

    @property
    def output_dir(self) -> str:
        return self.sections["output"]["dir"] or self.name

    def with_seed(self, seed: int) -> "Scenario":
        secs = {k: dict(v) for k, v in self.sections.items()}
        secs["scenario"]["seed"] = _u64(seed)
        return Scenario(self.name, self.kind, secs["scenario"]["seed"], self.schema_version, secs,
                        list(self.warnings), self.path)

    def echo(self) -> str:
        """Canonical text of the resolved scenario (sorted keys, JSON values)."""
        lines = []
        for sec in SECTIONS:
            lines.append(f"[{sec}]")
            for k in sorted(self.sections[sec]):
                lines.append(f"{k} = {json.dumps(self.sections[sec][k], sort_keys=True)}")
            lines.append("")
        return "\n".join(lines)


def parse_scenario(text: str, strict: bool = False, source: str = "scenario") -> Scenario:
    """Validate ``text`` and return a :class:`Scenario`.

    Raises :class:`ScenarioError` listing every field-level problem.
    Duplicate sections or keys are errors.  Unknown sections or keys are
    errors with ``strict`` and :class:`SchemaWarning` otherwise.
    """
    cp = configparser.ConfigParser(strict=True, interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.DuplicateSectionError as exc:
        raise ScenarioError([f"duplicate section [{exc.section}]"], source) from None
    except configparser.DuplicateOptionError as exc:
        raise ScenarioError([f"{exc.section}.{exc.option}: duplicate key"], source) from None
    except configparser.Error as exc:
        raise ScenarioError([f"malformed file: {exc}"], source) from None
    errors, notes = [], []
    raw = {s: {k: _literal(v) for k, v in cp.items(s)} for s in cp.sections()}
    for s in raw:
        if s not in SECTIONS:
            (errors if strict else notes).append(f"unknown section [{s}]")
    if "scenario" not in raw:
        raise ScenarioError(["missing section [scenario]"], source)
    kind = raw["scenario"].get("kind")
    if kind not in KINDS:
        errors.append(f"scenario.kind: must be one of {', '.join(KINDS)}")
        raise ScenarioError(errors, source)
    schema = dict(_BASE, run=_RUN[kind])
    defaults = _KIND_DEFAULTS.get(kind, {})
    out = {}
    for sec in SECTIONS:
        given = raw.get(sec, {})
        vals = {}
        for key, (cast, default) in schema[sec].items():
            if key in given:
                try:
                    vals[key] = cast(given[key])
                except (ValueError, TypeError) as exc:
                    errors.append(f"{sec}.{key}: {exc}")
            elif default is REQUIRED:
                errors.append(f"{sec}.{key}: required")
            else:
                vals[key] = defaults.get(sec, {}).get(key, default)
        for key in given:
            if key not in schema[sec]:
                (errors if strict else notes).append(f"{sec}.{key}: unknown key")
        out[sec] = vals
    sc = out["scenario"]
    if "schema_version" in sc and sc["schema_version"] != SCHEMA_VERSION:
        errors.append(f"scenario.schema_version: expected {SCHEMA_VERSION}")
    if kind == "waveop" and out["run"].get("mode") not in (None, "short", "long"):
        errors.append("run.mode: must be 'short' or 'long'")
    if kind == "xsection" and not out["run"].get("clock_beta", 0) < 1:
        errors.append("run.clock_beta: must be below 1")
    if errors:
        raise ScenarioError(errors, source)
    for n in notes:
        warnings.warn(f"{source}: {n} (ignored)", SchemaWarning, stacklevel=2)
    return Scenario(sc["name"], kind, sc["seed"], sc["schema_version"], out, notes)


def load_scenario(path, strict: bool = False) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError([f"cannot read: {exc.strerror}"], str(p)) from None
    s = parse_scenario(text, strict=strict, source=str(p))
    s.path = str(p)
    return s
