"""Reading and writing moving-maxima model files.

A model file is YAML (hand-written) or JSON (machine-emitted); JSON is a
subset of YAML so both go through :func:`load_model`.  Layout::

    profiles:
      - mass: 0.5                  # Poisson rate per shift, > 0
        support: [[0, 1.0], [1, 2.0]]   # (integer lag, real value) pairs
    diagonal:
      - [1.5, 0.3]                 # (level, mass)

Either key may be omitted.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .exponent_core import MovingMaximaModel, Profile

MODEL_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "profiles": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["mass", "support"],
                "properties": {
                    "mass": {"type": "number", "exclusiveMinimum": 0},
                    "support": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "array",
                            "prefixItems": [{"type": "integer"}, {"type": "number"}],
                            "minItems": 2,
                            "maxItems": 2,
                        },
                    },
                },
            },
        },
        "diagonal": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [{"type": "number"}, {"type": "number", "exclusiveMinimum": 0}],
                "minItems": 2,
                "maxItems": 2,
            },
        },
    },
}


def model_from_dict(doc: dict[str, Any]) -> MovingMaximaModel:
    jsonschema.validate(doc, MODEL_SCHEMA)
    profiles = []
    for prof in doc.get("profiles", []):
        values: dict[int, float] = {}
        for lag, value in prof["support"]:
            if lag in values:
                raise ValueError(f"duplicate lag {lag} in profile support")
            values[lag] = value
        profiles.append(Profile(prof["mass"], values))
    diagonal = tuple((lvl, m) for lvl, m in doc.get("diagonal", []))
    return MovingMaximaModel(tuple(profiles), diagonal)


def model_to_dict(model: MovingMaximaModel) -> dict[str, Any]:
    return {
        "profiles": [
            {"mass": p.mass, "support": [[lag, v] for lag, v in p.values.items()]}
            for p in model.profiles
        ],
        "diagonal": [[lvl, m] for lvl, m in model.diagonal],
    }


def loads_model(text: str) -> MovingMaximaModel:
    doc = yaml.safe_load(text) or {}
    if not isinstance(doc, dict):
        raise ValueError("model document must be a mapping")
    return model_from_dict(doc)


def load_model(path: str | Path) -> MovingMaximaModel:
    return loads_model(Path(path).read_text())


def dumps_model(model: MovingMaximaModel) -> str:
    """Machine form (JSON); readable back with :func:`loads_model`."""
    return json.dumps(model_to_dict(model), indent=2)
