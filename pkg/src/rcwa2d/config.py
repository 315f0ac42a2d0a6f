"""JSON run configurations: schema, validation and construction of library objects.

Lengths are in nanometres and the angle of incidence is in degrees.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

from .geometry import (
    DeviceSpec,
    GradedPermittivity,
    InterfaceProfile,
    LinearSegment,
    PolynomialSegment,
    SineSegment,
)
from .modal import IncidentWave

RUN_KINDS = ("solve", "m_sweep", "h_sweep", "diagnose")

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_complex = {
    "oneOf": [
        _number,
        {
            "type": "object",
            "properties": {"re": _number, "im": _number},
            "required": ["re"],
            "additionalProperties": False,
        },
    ]
}
_permittivity = {
    "oneOf": [
        _number,
        {
            "type": "object",
            "properties": {"re": _number, "im": _number},
            "required": ["re"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"expr": {"type": "string", "minLength": 1}},
            "required": ["expr"],
            "additionalProperties": False,
        },
    ]
}
_span = {"x_start": _number, "x_end": _number}
_segment = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "linear"}, **_span, "y_start": _number, "y_end": _number},
            "required": ["type", "x_start", "x_end", "y_start", "y_end"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "sine"},
                **_span,
                "offset": _number,
                "amplitude": _number,
                "wavelength": _positive,
                "phase": _number,
            },
            "required": ["type", "x_start", "x_end", "offset", "amplitude", "wavelength"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "polynomial"},
                **_span,
                "coefficients": {"type": "array", "items": _number, "minItems": 1},
            },
            "required": ["type", "x_start", "x_end", "coefficients"],
            "additionalProperties": False,
        },
    ]
}
_order = {"type": "integer", "minimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rcwa2d run configuration",
    "type": "object",
    "required": ["device", "incident", "run", "discretization"],
    "additionalProperties": False,
    "properties": {
        "device": {
            "type": "object",
            "required": ["period", "half_height", "regions"],
            "additionalProperties": False,
            "properties": {
                "period": _positive,
                "half_height": _positive,
                "interfaces": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["segments"],
                        "additionalProperties": False,
                        "properties": {"segments": {"type": "array", "items": _segment, "minItems": 1}},
                    },
                },
                "regions": {"type": "array", "items": _permittivity, "minItems": 1},
                "eps_plus": _complex,
                "eps_minus": _complex,
            },
        },
        "incident": {
            "type": "object",
            "required": ["wavelength"],
            "additionalProperties": False,
            "properties": {
                "wavelength": _positive,
                "theta": {"type": "number", "exclusiveMinimum": -90, "exclusiveMaximum": 90},
                "amplitude": _complex,
            },
        },
        "run": {"enum": list(RUN_KINDS)},
        "discretization": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M": _order,
                "M_list": {"type": "array", "items": _order, "minItems": 1},
                "h": _positive,
                "h_list": {"type": "array", "items": _positive, "minItems": 1},
                "reference": {
                    "type": "object",
                    "required": ["M", "h"],
                    "additionalProperties": False,
                    "properties": {"M": _order, "h": _positive},
                },
                "floor_policy": {"oneOf": [{"enum": ["min", "none"]}, _positive]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}, "uniqueItems": True},
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"nx": {"type": "integer", "minimum": 2}, "nz": {"type": "integer", "minimum": 2}},
                },
            },
        },
    },
}

# Keys each run kind needs in "discretization".
REQUIRED = {
    "solve": ("M", "h"),
    "diagnose": ("M", "h"),
    "m_sweep": ("M_list", "h", "reference"),
    "h_sweep": ("M", "h_list", "reference"),
}


class ConfigError(ValueError):
    """A configuration failed validation; ``path`` names the offending entry."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def validate(doc: dict) -> None:
    """Check ``doc`` against the schema and the per-run requirements.

    Raises:
        ConfigError: On the first (most specific) violation.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (-len(e.absolute_path), str(e.absolute_path)))
    if errors:
        err = jsonschema.exceptions.best_match(errors) or errors[0]
        raise ConfigError(_path(err.absolute_path), err.message)
    disc = doc["discretization"]
    for key in REQUIRED[doc["run"]]:
        if key not in disc:
            raise ConfigError(f"discretization.{key}", f"required for run '{doc['run']}'")
    for k, region in enumerate(doc["device"]["regions"]):
        if isinstance(region, dict) and "expr" in region:
            try:
                _expression(region["expr"])
            except ValueError as exc:
                raise ConfigError(f"device.regions[{k}].expr", str(exc)) from None


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

_X1, _X2 = sympy.symbols("x1 x2", real=True)


def _expression(text: str) -> sympy.Expr:
    try:
        expr = parse_expr(text, local_dict={"x1": _X1, "x2": _X2, "I": sympy.I, "pi": sympy.pi})
    except Exception as exc:  # sympy raises a wide variety of parse errors
        raise ValueError(f"cannot parse expression {text!r}: {exc}") from None
    extra = expr.free_symbols - {_X1, _X2}
    if extra:
        raise ValueError(f"unknown symbols {sorted(map(str, extra))}; only x1 and x2 are allowed")
    return expr


def _graded(text: str) -> GradedPermittivity:
    expr = _expression(text)
    f = sympy.lambdify((_X1, _X2), expr, "numpy")
    df = sympy.lambdify((_X1, _X2), sympy.diff(expr, _X2), "numpy")
    return GradedPermittivity(f, df, label=text)


def _complex_value(v) -> complex:
    if isinstance(v, dict):
        return complex(v["re"], v.get("im", 0.0))
    return complex(v)


def _segment_obj(d: dict):
    kind = d["type"]
    if kind == "linear":
        return LinearSegment(d["x_start"], d["x_end"], d["y_start"], d["y_end"])
    if kind == "sine":
        return SineSegment(d["x_start"], d["x_end"], d["offset"], d["amplitude"], d["wavelength"], d.get("phase", 0.0))
    return PolynomialSegment(d["x_start"], d["x_end"], tuple(d["coefficients"]))


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """A validated configuration document and the objects it describes."""

    doc: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        validate(doc)
        cfg = cls(copy.deepcopy(doc))
        try:
            cfg.device()
            cfg.incident()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError("device", str(exc)) from None
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    @property
    def run(self) -> str:
        return self.doc["run"]

    @property
    def discretization(self) -> dict:
        return self.doc["discretization"]

    @property
    def output(self) -> dict:
        return self.doc.get("output", {})

    def device(self) -> DeviceSpec:
        d = self.doc["device"]
        interfaces = []
        for k, iface in enumerate(d.get("interfaces", [])):
            try:
                interfaces.append(InterfaceProfile(tuple(_segment_obj(s) for s in iface["segments"])))
            except ValueError as exc:
                raise ConfigError(f"device.interfaces[{k}]", str(exc)) from None
        regions = tuple(
            _graded(r["expr"]) if isinstance(r, dict) and "expr" in r else _complex_value(r) for r in d["regions"]
        )
        return DeviceSpec(
            float(d["period"]),
            float(d["half_height"]),
            tuple(interfaces),
            regions,
            _complex_value(d.get("eps_plus", 1.0)),
            _complex_value(d.get("eps_minus", 1.0)),
        )

    def incident(self) -> IncidentWave:
        inc = self.doc["incident"]
        return IncidentWave(
            float(inc["wavelength"]),
            math.radians(float(inc.get("theta", 0.0))),
            _complex_value(inc.get("amplitude", 1.0)),
        )

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def dumps(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"


def complex_to_json(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else {"re": z.real, "im": z.imag}


def device_to_dict(device: DeviceSpec) -> dict:
    """Serialize a device whose regions are constants (graded regions keep their label)."""
    regions = []
    for r in device.regions:
        if isinstance(r, GradedPermittivity):
            if not r.label:
                raise ValueError("graded regions need an expression label to be serialized")
            regions.append({"expr": r.label})
        else:
            regions.append(complex_to_json(r))
    return {
        "period": device.period,
        "half_height": device.half_height,
        "interfaces": [iface.to_dict() for iface in device.interfaces],
        "regions": regions,
        "eps_plus": complex_to_json(device.eps_plus),
        "eps_minus": complex_to_json(device.eps_minus),
    }


def incident_to_dict(incident: IncidentWave) -> dict:
    return {
        "wavelength": incident.wavelength,
        "theta": float(np.degrees(incident.theta)),
        "amplitude": complex_to_json(incident.amplitude),
    }
