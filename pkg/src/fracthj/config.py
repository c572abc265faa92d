"""Experiment configuration: JSON files validated against a fixed schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError

__all__ = ["KINDS", "SCHEMA", "ExperimentConfig", "load_config", "parse_config"]

KINDS = ("heat", "hj", "fp", "duality", "ml-table", "convergence")

_EXPR = {"type": ["string", "number"]}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "sigma": _POS,
        "dim": {"enum": [1, 2]},
        "n": {"type": "integer", "minimum": 8, "multipleOf": 2},
        "t_final": _POS,
        "steps": {"type": "integer", "minimum": 1},
        "grading": {"type": "number", "minimum": 1},
        "hamiltonian": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["quadratic", "power"]},
                "gamma": {"type": "number", "exclusiveMinimum": 1},
                "coefficient": _EXPR,
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "u0": _EXPR,
                "source": _EXPR,
                "V": _EXPR,
                "rho_tau": _EXPR,
                "drift": {"type": "array", "items": _EXPR, "minItems": 1, "maxItems": 2},
                "exact": _EXPR,
                "manufactured": _EXPR,
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": _POS,
                "max_picard": {"type": "integer", "minimum": 1},
                "scheme": {"enum": ["spectral", "upwind"]},
                "heat": {"enum": ["mild", "l1"]},
                "inner": {"enum": ["l1", "mild"]},
                "window": _POS,
                "dealias": {"type": "boolean"},
            },
        },
        "ml_table": {
            "type": "object",
            "additionalProperties": False,
            "required": ["z"],
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "b": _POS,
                "z": {"type": "array", "items": {"type": "number", "maximum": 0}, "minItems": 1},
            },
        },
        "convergence": {
            "type": "object",
            "additionalProperties": False,
            "required": ["target"],
            "properties": {
                "target": {"enum": ["caputo-power", "heat", "hj", "duality"]},
                "gamma": _POS,
                "refine_space": {"type": "boolean"},
            },
        },
        "assumption_samples": {"type": "integer", "minimum": 100},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["kind"],
}

DEFAULTS = {
    "beta": 0.7,
    "sigma": 1.0,
    "dim": 1,
    "n": 64,
    "t_final": 1.0,
    "steps": 256,
    "grading": 1.0,
    "assumption_samples": 256,
    "seed": 0,
}
SOLVER_DEFAULTS = {
    "tol": 1e-10,
    "max_picard": 100,
    "scheme": "spectral",
    "heat": "mild",
    "inner": "l1",
    "window": None,
    "dealias": True,
}


@dataclass
class ExperimentConfig:
    kind: str
    beta: float
    sigma: float
    dim: int
    n: int
    t_final: float
    steps: int
    grading: float
    hamiltonian: dict
    data: dict
    solver: dict
    ml_table: dict | None
    convergence: dict | None
    assumption_samples: int
    output: str | None
    seed: int
    raw: dict = field(repr=False, default_factory=dict)


def parse_config(raw: dict, kind: str | None = None) -> ExperimentConfig:
    """Validate ``raw`` and fill defaults; ``kind`` (from the command line) must agree."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    if kind is not None:
        raw.setdefault("kind", kind)
        if raw["kind"] != kind:
            raise ConfigError(f"config kind {raw['kind']!r} does not match command {kind!r}")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}")
    merged = {**DEFAULTS, **raw}
    if merged["kind"] == "ml-table" and "ml_table" not in raw:
        raise ConfigError("kind 'ml-table' needs an 'ml_table' section")
    if merged["kind"] == "convergence" and "convergence" not in raw:
        raise ConfigError("kind 'convergence' needs a 'convergence' section")
    ham = {"kind": "quadratic", "coefficient": 1.0, **raw.get("hamiltonian", {})}
    if ham["kind"] == "quadratic":
        if ham.get("gamma", 2.0) != 2.0:
            raise ConfigError("a quadratic Hamiltonian has gamma = 2")
        ham["gamma"] = 2.0
    ham.setdefault("gamma", 2.0)
    return ExperimentConfig(
        kind=merged["kind"],
        beta=float(merged["beta"]),
        sigma=float(merged["sigma"]),
        dim=int(merged["dim"]),
        n=int(merged["n"]),
        t_final=float(merged["t_final"]),
        steps=int(merged["steps"]),
        grading=float(merged["grading"]),
        hamiltonian=ham,
        data=dict(raw.get("data", {})),
        solver={**SOLVER_DEFAULTS, **raw.get("solver", {})},
        ml_table=raw.get("ml_table"),
        convergence=raw.get("convergence"),
        assumption_samples=int(merged["assumption_samples"]),
        output=raw.get("output"),
        seed=int(merged["seed"]),
        raw=raw,
    )


def load_config(path: str | Path, kind: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    return parse_config(raw, kind)
