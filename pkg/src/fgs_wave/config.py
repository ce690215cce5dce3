"""JSON configuration files for single runs and error sweeps.

Both formats are validated with JSON Schema before being turned into model
objects; schema violations surface as :class:`ConfigError` with the failing
path. ``python -m fgs_wave.config`` prints the schemas (they are also
shipped under ``docs/``).
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema

from .errors import ConfigError
from .model import (GaussianAmplitude, GaussianInitialData, Grid, PolynomialGaussianAmplitude,
                    QuadraticPhase, VelocityField, WKBInitialData, velocity_from_dict)
from .rays import DEFAULT_DT

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 3}
_pos_vec = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1, "maxItems": 3}

VELOCITY_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["constant", "sine_sum"]},
        "params": {"type": "object", "properties": {
            "c0": {"type": "number", "exclusiveMinimum": 0},
            "base": {"type": "number", "exclusiveMinimum": 0},
            "amp": {"type": "number"}}, "additionalProperties": False},
    },
    "additionalProperties": False,
}

_amplitude = {
    "oneOf": [
        {"type": "object", "required": ["kind", "widths", "center"], "additionalProperties": False,
         "properties": {"kind": {"const": "gaussian"}, "widths": _pos_vec, "center": _vec}},
        {"type": "object", "required": ["kind", "coeffs", "alpha"], "additionalProperties": False,
         "properties": {"kind": {"const": "polynomial_gaussian"},
                        "coeffs": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                        "alpha": {"type": "number", "exclusiveMinimum": 0},
                        "center": {"type": "number"}}},
    ]
}

_phase = {
    "oneOf": [
        {"type": "object", "required": ["kind", "hessian", "linear"], "additionalProperties": False,
         "properties": {"kind": {"const": "quadratic"},
                        "hessian": {"type": "array", "items": _vec}, "linear": _vec,
                        "constant": {"type": "number"}}},
        {"type": "object", "required": ["kind", "center"], "additionalProperties": False,
         "properties": {"kind": {"const": "centered"}, "center": _vec,
                        "scale": {"type": "number"}, "constant": {"type": "number"}}},
    ]
}

_weights = {"f0_weight": {"type": "number"}, "f1_weight": {"type": "number"}}

INITIAL_DATA_SCHEMA = {
    "oneOf": [
        {"type": "object", "required": ["kind", "params"], "additionalProperties": False,
         "properties": {"kind": {"const": "gaussian"}, "params": {
             "type": "object", "required": ["center", "momentum", "widths"], "additionalProperties": False,
             "properties": {"center": _vec, "momentum": _vec, "widths": _pos_vec, **_weights}}}},
        {"type": "object", "required": ["kind", "params"], "additionalProperties": False,
         "properties": {"kind": {"const": "wkb"}, "params": {
             "type": "object", "required": ["amplitude", "phase"], "additionalProperties": False,
             "properties": {"amplitude": _amplitude, "phase": _phase, **_weights}}}},
    ]
}

RUN_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fgs-wave run configuration",
    "type": "object",
    "required": ["dimension", "wave_number", "velocity", "initial_data", "grid", "time", "sampling"],
    "additionalProperties": False,
    "properties": {
        "dimension": {"enum": [1, 2, 3]},
        "wave_number": {"type": "number", "exclusiveMinimum": 0},
        "velocity": VELOCITY_SCHEMA,
        "initial_data": INITIAL_DATA_SCHEMA,
        "grid": {"type": "object", "required": ["bounds"], "additionalProperties": False, "properties": {
            "bounds": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                                  "minItems": 2, "maxItems": 2},
                       "minItems": 1, "maxItems": 3},
            "ppw": {"type": "number", "minimum": 2}}},
        "time": {"type": "object", "required": ["t_final"], "additionalProperties": False, "properties": {
            "t_final": {"type": "number", "minimum": 0},
            "dt": {"type": "number", "exclusiveMinimum": 0}}},
        "sampling": {"type": "object", "required": ["M"], "additionalProperties": False, "properties": {
            "kind": {"enum": ["auto", "gaussian", "wkb_gaussian", "inverse_transform"]},
            "M": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0}}},
        "momentum_sign": {"enum": ["hamiltonian", "literal"]},
        "cutoff_radius": {"type": "number", "exclusiveMinimum": 0},
    },
}

SWEEP_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fgs-wave error sweep configuration",
    "type": "object",
    "required": ["scenario"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"type": "string"},
        "velocity": {"enum": ["c1", "c2"]},
        "k_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "M_values": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "repetitions": {"type": "integer", "minimum": 2},
        "M0": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "t_final": {"type": "number", "minimum": 0},
        "momentum_sign": {"enum": ["hamiltonian", "literal"]},
        "dump_fields": {"type": "boolean"},
        "figures": {"type": "boolean"},
    },
}


def _validate(doc, schema):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {path}: {exc.message}") from None


def read_json(source) -> dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _fit(vec, d, name):
    vec = list(vec)
    if len(vec) == 1 and d > 1:
        vec = vec * d
    if len(vec) != d:
        raise ConfigError(f"{name} has length {len(vec)}, expected {d}")
    return tuple(vec)


def initial_data_from_dict(spec: dict, k: float, d: int):
    params = spec["params"]
    weights = {w: float(params[w]) for w in ("f0_weight", "f1_weight") if w in params}
    if spec["kind"] == "gaussian":
        return GaussianInitialData(k, _fit(params["center"], d, "center"),
                                   _fit(params["momentum"], d, "momentum"),
                                   _fit(params["widths"], d, "widths"), **weights)
    amp = params["amplitude"]
    if amp["kind"] == "gaussian":
        amplitude = GaussianAmplitude(_fit(amp["widths"], d, "widths"), _fit(amp["center"], d, "center"))
    else:
        if d != 1:
            raise ConfigError("polynomial amplitudes are one-dimensional")
        amplitude = PolynomialGaussianAmplitude(tuple(amp["coeffs"]), float(amp["alpha"]),
                                                float(amp.get("center", 0.0)))
    ph = params["phase"]
    if ph["kind"] == "centered":
        phase = QuadraticPhase.centered(_fit(ph["center"], d, "center"), float(ph.get("scale", 1.0)),
                                        ph.get("constant"))
    else:
        phase = QuadraticPhase(tuple(tuple(r) for r in ph["hessian"]), _fit(ph["linear"], d, "linear"),
                               float(ph.get("constant", 0.0)))
    return WKBInitialData(k, amplitude, phase, **weights)


@dataclass
class RunConfig:
    """A validated single-run configuration."""

    raw: dict
    velocity: VelocityField
    data: object
    grid: Grid
    t_final: float
    dt: float
    M: int
    seed: int
    sampler: str
    momentum_sign: str
    cutoff_radius: float

    @property
    def k(self):
        return self.data.k

    @property
    def dim(self):
        return self.data.dim


def load_run_config(source) -> RunConfig:
    doc = read_json(source)
    _validate(doc, RUN_SCHEMA)
    d = doc["dimension"]
    k = float(doc["wave_number"])
    bounds = doc["grid"]["bounds"]
    if len(bounds) != d:
        raise ConfigError(f"grid has {len(bounds)} axes, expected {d}")
    grid = Grid.for_box([b[0] for b in bounds], [b[1] for b in bounds], k, doc["grid"].get("ppw", 8))
    samp = doc["sampling"]
    return RunConfig(doc, velocity_from_dict(doc["velocity"], d), initial_data_from_dict(doc["initial_data"], k, d),
                     grid, float(doc["time"]["t_final"]), float(doc["time"].get("dt", DEFAULT_DT)),
                     int(samp["M"]), int(samp.get("seed", 0)), samp.get("kind", "auto"),
                     doc.get("momentum_sign", "hamiltonian"), float(doc.get("cutoff_radius", 8.0)))


def load_sweep_doc(source) -> dict:
    """Validated sweep settings; a previous run's manifest is unwrapped to its ``config``."""
    doc = read_json(source)
    if isinstance(doc, dict) and "config" in doc and "versions" in doc:
        doc = doc["config"]
    _validate(doc, SWEEP_SCHEMA)
    return doc


def dump_schemas(out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, schema in (("run", RUN_SCHEMA), ("sweep", SWEEP_SCHEMA)):
        p = out / f"{name}.schema.json"
        p.write_text(json.dumps(schema, indent=2) + "\n")
        paths.append(p)
    return paths


if __name__ == "__main__":  # pragma: no cover
    json.dump({"run": RUN_SCHEMA, "sweep": SWEEP_SCHEMA}, sys.stdout, indent=2)
