"""Run configuration: one YAML/JSON schema shared by every CLI command.

A config file is a mapping with an optional top-level ``seed`` and one
section per command.  Only the section named by the command is used, so a
single file may carry several sections::

    seed: 7
    gas:
      d: 1
      a: 1.0
      times: [0, 0.25, 1, 4]
      replicates: 100000

Defaults are filled in by :func:`load_config`; the resolved mapping is what
the CLI records in its manifest.
"""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .modelio import MODEL_SCHEMA

COMMANDS = ("exact", "diag", "br", "gas", "report")

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}
_tol = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}
_frac = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_pair = {"type": "array", "minItems": 2, "maxItems": 2,
         "prefixItems": [_nonneg, _pos]}


def _section(properties: dict, required: list[str]) -> dict:
    return {"type": "object", "additionalProperties": False,
            "properties": properties, "required": required}


def _tagged(tag: str, properties: dict, required: list[str]) -> dict:
    props = {"type": {"const": tag}, **properties}
    return _section(props, ["type", *required])


SEQUENCE_SCHEMA = {"oneOf": [
    _tagged("spectral", {"atoms": {"type": "array", "minItems": 1, "items": _pair},
                         "n": _count}, ["atoms", "n"]),
    _tagged("dyadic_spikes", {"height": _pos, "n": _count}, ["n"]),
    _tagged("values", {"values": {"type": "array", "minItems": 10, "items": _nonneg},
                       "bound": _pos, "kind": {"enum": ["tau", "r"]}}, ["values"]),
    _tagged("csv", {"path": {"type": "string"}, "bound": _pos,
                    "kind": {"enum": ["tau", "r"]}}, ["path"]),
]}

VARIOGRAM_SCHEMA = {"oneOf": [
    _tagged("power", {"theta": _pos, "alpha": {"type": "number", "exclusiveMinimum": 0,
                                               "maximum": 2}}, ["theta", "alpha"]),
    _tagged("dyadic", {"t_max": _pos, "tol": _pos}, []),
    _tagged("table", {"t": {"type": "array", "items": _nonneg, "minItems": 2},
                      "values": {"type": "array", "items": _nonneg, "minItems": 2}},
            ["t", "values"]),
]}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "minProperties": 1,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "description": {"type": "string"},
        "exact": _section({
            "model": MODEL_SCHEMA,
            "levels": {"type": "array", "minItems": 1, "items": {"type": "number"}},
            "horizon": {"type": "integer", "minimum": 10},
            "tol": _tol,
            "tail_fraction": _frac,
            "kappa": {"type": "array", "minItems": 1, "items": _pos},
        }, ["model", "levels", "horizon"]),
        "diag": _section({
            "sequence": SEQUENCE_SCHEMA,
            "tol": _tol,
            "tail_fraction": _frac,
            "kappa": {"type": "array", "minItems": 1, "items": _pos},
            "delta": _pos,
        }, ["sequence"]),
        "br": _section({
            "variogram": VARIOGRAM_SCHEMA,
            "grid": {"type": "array", "minItems": 2, "items": _nonneg},
            "replicates": _count,
            "method": {"enum": ["extremal", "threshold"]},
            "margin": _pos,
            "max_count": _count,
            "block_size": _count,
            "r_formula": {"enum": ["auto", "single_tail", "continuity"]},
            "levels": {"type": "array", "items": _pos},
            "sigma2_powers": {"type": "integer", "minimum": 0, "maximum": 60},
            "exceptional": _section({
                "eps": {"type": "array", "minItems": 1,
                        "items": {"type": "number", "exclusiveMinimum": 0,
                                  "exclusiveMaximum": 0.25}},
                "n_max": {"type": "integer", "minimum": 1, "maximum": 20},
                "grid_step_fraction": {"type": "number", "exclusiveMinimum": 0,
                                       "maximum": 0.25},
            }, ["eps", "n_max"]),
        }, ["variogram", "grid", "replicates"]),
        "gas": _section({
            "d": {"enum": [1, 2, 3]},
            "a": _pos,
            "times": {"type": "array", "minItems": 1, "items": _nonneg},
            "replicates": _count,
            "L": _pos,
            "block_size": _count,
            "oracle_log2_draws": {"type": "integer", "minimum": 8, "maximum": 24},
        }, ["d", "a", "times", "replicates"]),
        "report": _section({
            "configs": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        }, ["configs"]),
    },
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "exact": {"tol": 1e-3, "tail_fraction": 0.2, "kappa": [1.0]},
    "diag": {"tol": 1e-3, "tail_fraction": 0.2, "kappa": [1.0], "delta": 1e-3},
    "br": {"method": "extremal", "margin": 12.0, "max_count": 100_000, "block_size": 4096,
           "r_formula": "auto", "levels": [1.0, 2.0], "sigma2_powers": 0},
    "gas": {"block_size": 8192, "oracle_log2_draws": 16},
    "report": {},
}


class ConfigError(ValueError):
    """A config failed to parse or validate; ``errors`` lists every problem."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


def _fmt(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{where}: {err.message}"


def validate_config(doc: Any, command: str) -> list[str]:
    """Every schema error for ``doc`` when run as ``command`` (empty if valid)."""
    if command not in COMMANDS:
        return [f"unknown command {command!r}"]
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        return [f"<root>: config must be a mapping, got {type(doc).__name__}"]
    schema = dict(CONFIG_SCHEMA, required=[command])
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    return [_fmt(e) for e in errors]


def load_config(text_or_path: str | Path, command: str) -> dict[str, Any]:
    """Parse, validate and fill defaults; raise :class:`ConfigError` on any problem."""
    path = Path(text_or_path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc
    errors = validate_config(doc, command)
    if errors:
        raise ConfigError(errors)
    doc = copy.deepcopy(doc)
    doc.setdefault("seed", 0)
    doc[command] = {**DEFAULTS[command], **doc[command]}
    return doc


def bundled_configs() -> dict[str, Path]:
    """Example configs shipped with the package, keyed by file stem."""
    root = resources.files("maxid") / "configs"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml")}


def resolve_config_path(name: str) -> Path:
    """A filesystem path, or the stem of a bundled config."""
    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_configs()
    if name in bundled:
        return bundled[name]
    return path
