"""JSON schemas for scenario input and every JSON document the CLI writes.

:func:`validate` uses ``jsonschema`` when it is installed.  Without it only
the top-level required keys and types are checked, which is enough to give
a readable error for malformed scenario files.
"""
from __future__ import annotations

import math

import numpy as np

SCHEMA_VERSION = "1.0"

_num = {"type": "number"}
_nnum = {"type": ["number", "null"]}
_vec = {"type": "array", "items": _num, "minItems": 1, "maxItems": 3}
_pts = {"type": "array", "items": _vec}
_bool = {"type": "boolean"}


def _envelope(kind: str, props: dict, required: list) -> dict:
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": ["schema_version", "kind", *required],
        "properties": {"schema_version": {"const": SCHEMA_VERSION}, "kind": {"const": kind}, **props},
    }


_term = {
    "type": "object",
    "required": ["coord", "c"],
    "properties": {
        "coord": {"type": "integer", "minimum": 0, "maximum": 2},
        "c": _num,
        "p": {"oneOf": [{"type": "integer", "minimum": 0}, {"type": "array", "items": {"type": "integer", "minimum": 0}}]},
        "omega": {"oneOf": [_num, {"type": "array", "items": _num}]},
        "phi": {"oneOf": [_num, {"type": "array", "items": _num}]},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "m", "D", "charts"],
    "properties": {
        "name": {"type": "string"},
        "m": {"type": "integer", "minimum": 1, "maximum": 2},
        "D": {"type": "integer", "minimum": 2, "maximum": 3},
        "reach": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "unknown"}, {"type": "null"}]},
        "diameter": _nnum,
        "metadata": {"type": "object"},
        "charts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["builtin", "polynomial_trig"]},
                    "builtin": {"type": "string"},
                    "index": {"type": "integer", "minimum": 0},
                    "domain": {
                        "type": "object",
                        "required": ["lo", "hi"],
                        "properties": {
                            "lo": {"oneOf": [_num, _vec]},
                            "hi": {"oneOf": [_num, _vec]},
                            "periodic": {"oneOf": [_bool, {"type": "array", "items": _bool}]},
                        },
                    },
                    "sample_lo": {"oneOf": [_num, _vec]},
                    "sample_hi": {"oneOf": [_num, _vec]},
                    "terms": {"type": "array", "items": _term},
                },
                "allOf": [
                    {"if": {"properties": {"kind": {"const": "builtin"}}}, "then": {"required": ["builtin"]}},
                    {"if": {"properties": {"kind": {"const": "polynomial_trig"}}},
                     "then": {"required": ["domain", "terms"]}},
                ],
            },
        },
    },
}

_critical_point = {
    "type": "object",
    "required": ["z", "r", "s", "projections", "weights", "residual", "source"],
    "properties": {
        "z": _vec,
        "r": {"type": "number", "exclusiveMinimum": 0},
        "s": {"type": "integer", "minimum": 1},
        "projections": _pts,
        "weights": {"type": "array", "items": {"type": "number", "minimum": -1e-9}},
        "residual": _num,
        "source": {"enum": ["cloud_exact", "manifold_newton"]},
        "flags": {"type": "array", "items": {"type": "string"}},
        "jacobian_cond": _nnum,
        "chart_params": {"type": "array"},
    },
}

CRITICAL_SET_SCHEMA = _envelope(
    "critical_set",
    {
        "scenario": {"type": "string"},
        "count": {"type": "integer", "minimum": 0},
        "complete": _bool,
        "dedup_radius": _num,
        "points": {"type": "array", "items": _critical_point},
        "rejected": {"type": "array", "items": {"type": "object", "required": ["reason"]}},
    },
    ["count", "points", "dedup_radius"],
)

_verdict = {"type": "object", "required": ["pass"], "properties": {"pass": _bool}}

CONDITION_REPORT_SCHEMA = _envelope(
    "condition_report",
    {
        "scenario": {"type": "string"},
        "overall": _bool,
        "failed": {"type": "array", "items": {"enum": ["P1", "P2", "P3", "P4"]}},
        "P2": {
            "type": "object",
            "required": ["pass", "count", "min_separation"],
            "properties": {"pass": _bool, "count": {"type": "integer"}, "min_separation": _nnum},
        },
        "critical_points": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["z", "r", "P1", "P3", "P4", "overall"],
                "properties": {
                    "P1": {**_verdict, "properties": {"pass": _bool, "simplex_volume": _nnum, "min_barycentric": _nnum}},
                    "P3": {**_verdict, "properties": {"pass": _bool, "alpha": _nnum}},
                    "P4": {**_verdict, "properties": {"pass": _bool, "min_abs_eigenvalue": _nnum}},
                    "overall": _bool,
                },
            },
        },
    },
    ["scenario", "overall", "P2", "critical_points"],
)

_fit = {
    "type": ["object", "null"],
    "required": ["slope", "intercept", "max_residual", "xs", "ys"],
    "properties": {"slope": _num, "intercept": _num, "max_residual": _num,
                   "xs": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                   "ys": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}},
}

SAMPLING_STUDY_SCHEMA = _envelope(
    "sampling_study",
    {
        "scenario": {"type": "string"},
        "runs": {"type": "array", "items": {"type": "object", "required": ["eps", "n_sample", "near", "far",
                                                                           "unclassified"]}},
        "near_fit": _fit,
        "far_fit": _fit,
        "constants": {"type": "object"},
        "checks": {"type": "object", "additionalProperties": _verdict},
        "passed": _bool,
    },
    ["scenario", "runs", "checks", "passed"],
)

PERTURBATION_SCHEMA = _envelope(
    "perturbation_study",
    {
        "scenario": {"type": "string"},
        "match_radius": _num,
        "results": {"type": "array", "items": {"type": "object",
                                               "required": ["amplitude", "bijection", "witnesses",
                                                            "max_displacement"]}},
        "passed": _bool,
    },
    ["scenario", "results", "passed"],
)

OFFSETS_SCHEMA = _envelope(
    "offset_scan",
    {
        "scenario": {"type": "string"},
        "grid_step": {"type": "number", "exclusiveMinimum": 0},
        "offsets": {"type": "array", "items": _num},
        "betti0": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "betti1": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "change_radii": {"type": "array", "items": _num},
    },
    ["scenario", "grid_step", "offsets", "betti0", "betti1", "change_radii"],
)

COUNTEREXAMPLE_SCHEMA = _envelope(
    "counterexample",
    {
        "rows": {"type": "array", "items": {"type": "object",
                                            "required": ["x", "gradient_norm", "ratio_to_3x2", "distance_ratio"]}},
        "checks": {"type": "object", "additionalProperties": _bool},
        "scan": {"type": "object"},
        "passed": _bool,
    },
    ["rows", "checks", "passed"],
)

SCHEMAS = {
    "scenario": SCENARIO_SCHEMA,
    "critical_set": CRITICAL_SET_SCHEMA,
    "condition_report": CONDITION_REPORT_SCHEMA,
    "sampling_study": SAMPLING_STUDY_SCHEMA,
    "perturbation_study": PERTURBATION_SCHEMA,
    "offset_scan": OFFSETS_SCHEMA,
    "counterexample": COUNTEREXAMPLE_SCHEMA,
}

_PY_TYPES = {"object": dict, "array": list, "string": str, "integer": int, "number": (int, float), "boolean": bool}


class SchemaError(ValueError):
    pass


def validate(data, schema: dict) -> None:
    try:
        import jsonschema
    except ImportError:
        jsonschema = None
    if jsonschema is not None:
        try:
            jsonschema.validate(data, schema)
        except jsonschema.ValidationError as exc:
            where = "/".join(map(str, exc.absolute_path)) or "<root>"
            raise SchemaError(f"invalid document at {where}: {exc.message}") from None
        return
    if not isinstance(data, dict):
        raise SchemaError("invalid document at <root>: expected an object")
    for key in schema.get("required", []):
        if key not in data:
            raise SchemaError(f"invalid document at <root>: {key!r} is a required property")
    for key, sub in schema.get("properties", {}).items():
        t = sub.get("type")
        if key in data and isinstance(t, str) and not isinstance(data[key], _PY_TYPES[t]):
            raise SchemaError(f"invalid document at {key}: expected {t}")


def jsonable(obj):
    """Plain-Python copy of ``obj`` with numpy scalars/arrays converted and non-finite floats as ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def document(kind: str, body: dict) -> dict:
    return jsonable({"schema_version": SCHEMA_VERSION, "kind": kind, **body})
