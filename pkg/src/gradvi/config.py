"""JSON problem configuration: parsing, validation, canonical echo and hashing."""
from __future__ import annotations

import hashlib
import json
from fractions import Fraction

import jsonschema
import numpy as np

from .domain import shape_from_dict
from .gauge import body_from_dict
from .problem import FORMULATIONS, ProblemSpec, SolverOptions

__all__ = ["ConfigError", "CONFIG_SCHEMA", "parse_config", "spec_from_dict", "canonical_json", "spec_hash"]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is a dotted path into the document."""

    def __init__(self, message: str, field: str = "", line: int | None = None):
        self.field = field
        self.line = line
        where = f" at line {line}" if line is not None else ""
        where += f" in field '{field}'" if field else ""
        super().__init__(f"{message}{where}")


_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "body", "h"],
    "properties": {
        "domain": {
            "type": "object",
            "required": ["kind"],
            "oneOf": [
                {"additionalProperties": False, "required": ["a", "b"],
                 "properties": {"kind": {"const": "interval"}, "a": _NUM, "b": _NUM}},
                {"additionalProperties": False, "required": ["corner", "widths"],
                 "properties": {"kind": {"const": "rectangle"}, "corner": _VEC, "widths": _VEC}},
                {"additionalProperties": False, "required": ["center", "radius"],
                 "properties": {"kind": {"const": "disk"}, "center": _VEC, "radius": _POS}},
                {"additionalProperties": False, "required": ["vertices"],
                 "properties": {"kind": {"const": "polygon"},
                                "vertices": {"type": "array", "items": _VEC, "minItems": 3}}},
            ],
        },
        "body": {
            "type": "object",
            "required": ["family"],
            "oneOf": [
                {"additionalProperties": False,
                 "properties": {"family": {"const": "ball"}, "radius": _POS, "dimension": {"type": "integer"}}},
                {"additionalProperties": False, "required": ["p"],
                 "properties": {"family": {"const": "pball"},
                                "p": {"oneOf": [{"type": "number", "minimum": 1}, {"const": "inf"}]},
                                "radius": _POS, "dimension": {"type": "integer"}}},
                {"additionalProperties": False, "required": ["half_widths"],
                 "properties": {"family": {"const": "box"}, "half_widths": {"oneOf": [_POS, _VEC]}}},
                {"additionalProperties": False,
                 "properties": {"family": {"const": "cross"}, "scale": _POS, "dimension": {"type": "integer"}}},
                {"additionalProperties": False, "required": ["normals", "offsets"],
                 "properties": {"family": {"const": "polytope"},
                                "normals": {"type": "array", "items": _VEC},
                                "offsets": _VEC, "symmetric": {"type": "boolean"}}},
            ],
        },
        "formulation": {"enum": list(FORMULATIONS)},
        "c": _NUM,
        "k": _NUM,
        "eta": {"oneOf": [_NUM, _VEC]},
        "zero_order": {
            "type": "object",
            "oneOf": [
                {"additionalProperties": False, "properties": {"kind": {"const": "linear"}}, "required": ["kind"]},
                {"additionalProperties": False, "required": ["kind", "coefficient", "exponent"],
                 "properties": {"kind": {"const": "power"}, "coefficient": _NUM, "exponent": _NUM}},
            ],
        },
        "h": {"oneOf": [_POS, {"type": "string", "pattern": r"^\s*\d+(\.\d*)?\s*(/\s*\d+\s*)?$"}]},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "omega": _NUM, "tol": _POS, "max_sweeps": {"type": "integer", "minimum": 1},
                "rho": _POS, "admm_tol": _POS, "max_iters": {"type": "integer", "minimum": 1},
            },
        },
        "seed": {"type": "integer"},
    },
}


def _path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path)


def _validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(list(e.absolute_path)), e.message))
    if not errors:
        return
    err = errors[0]
    # oneOf failures: report from the branch whose kind/family const matched
    while err.context:
        branches = {}
        for e in err.context:
            branches.setdefault(e.schema_path[0], []).append(e)
        matched = [es for es in branches.values() if not any(e.validator == "const" for e in es)]
        if not matched:
            consts = [e for e in err.context if e.validator == "const"]
            allowed = sorted({repr(e.validator_value) for e in consts})
            raise ConfigError(f"unknown value {consts[0].instance!r}; expected one of "
                              f"{', '.join(allowed)}", _path(consts[0]))
        pool = matched[0] if len(matched) == 1 else err.context
        err = max(pool, key=lambda e: (len(list(e.absolute_path)), e.validator != "const"))
    raise ConfigError(err.message, _path(err))


def _parse_h(h) -> float:
    return float(Fraction(h.replace(" ", ""))) if isinstance(h, str) else float(h)


def spec_from_dict(doc: dict) -> ProblemSpec:
    """Build a validated :class:`ProblemSpec` from a decoded config."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    _validate(doc)
    try:
        shape = shape_from_dict(doc["domain"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "domain") from None
    try:
        body = body_from_dict(doc["body"], shape.dimension)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "body") from None
    if body.dimension != shape.dimension:
        raise ConfigError(f"body dimension {body.dimension} differs from domain dimension "
                          f"{shape.dimension}", "body")
    eta = doc.get("eta", 0.0)
    formulation = doc.get("formulation", "vector" if isinstance(eta, list) else "both")
    if formulation == "vector":
        if not isinstance(eta, list):
            raise ConfigError("vector formulation needs a list", "eta")
        if not np.linalg.norm(eta) > 0:
            raise ConfigError("eta must be nonzero", "eta")
        eta = tuple(float(e) for e in eta)
    elif isinstance(eta, list):
        raise ConfigError(f"{formulation} formulation needs a number", "eta")
    else:
        eta = float(eta)
    k = float(doc.get("k", 1.0))
    if not k > 0:
        raise ConfigError("k must be positive", "k")
    zo = dict(doc.get("zero_order", {"kind": "linear"}))
    if zo["kind"] == "power":
        if not zo["exponent"] > 1:
            raise ConfigError("exponent must exceed 1", "zero_order.exponent")
        if zo["coefficient"] < 0:
            raise ConfigError("coefficient must be nonnegative", "zero_order.coefficient")
        if formulation == "vector":
            raise ConfigError("vector formulation supports the linear term only", "zero_order")
        zo = {"kind": "power", "coefficient": float(zo["coefficient"]), "exponent": float(zo["exponent"])}
    solver = SolverOptions(**doc.get("solver", {}))
    if not 0 < solver.omega < 2:
        raise ConfigError("omega must lie in (0, 2)", "solver.omega")
    h = _parse_h(doc["h"])
    if not 0 < h < shape.diameter / 2:
        raise ConfigError("h must be positive and below half the domain diameter", "h")
    return ProblemSpec(shape, body, formulation, float(doc.get("c", 0.0)), k, eta, zo, h, solver,
                       int(doc.get("seed", 0)))


def parse_config(text: str) -> ProblemSpec:
    """Parse JSON config text; syntax errors report their line."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    return spec_from_dict(doc)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def spec_hash(spec: ProblemSpec) -> str:
    return hashlib.sha256(canonical_json(spec.to_dict()).encode()).hexdigest()[:12]
