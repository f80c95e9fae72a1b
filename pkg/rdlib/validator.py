# rdlib/validator.py
from __future__ import annotations

from typing import Any, Dict, List, Tuple

try:
    from jsonschema import Draft7Validator
    from jsonschema.exceptions import ValidationError
except Exception as e:
    # jsonschema входит в обязательные зависимости проекта
    raise RuntimeError(
        "Требуется пакет 'jsonschema' (pip install jsonschema)"
    ) from e

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NON_NEGATIVE = {"type": "number", "minimum": 0}
_BAND_01 = {
    "type": "array",
    "items": {"type": "number", "minimum": 0, "maximum": 1},
    "minItems": 2,
    "maxItems": 2,
}

SCENARIO_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["radar", "run"],
    "properties": {
        "radar": {
            "type": "object",
            "required": ["f0", "B", "L", "M", "fs"],
            "properties": {
                "f0": _POSITIVE,
                "B": _POSITIVE,
                "L": {"type": "integer", "minimum": 1},
                "M": {"type": "integer", "minimum": 1},
                "fs": _POSITIVE,
                "delta_t": _POSITIVE,
                "T": _POSITIVE,
            },
            "additionalProperties": False,
        },
        "targets": {
            "type": "object",
            "properties": {
                "target": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 3,
                    },
                },
                "random": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
            "additionalProperties": False,
        },
        "clutter": {
            "type": "object",
            "properties": {
                "rate": _NON_NEGATIVE,
                "range_min": {"type": "number"},
                "range_max": {"type": "number"},
                "velocity_min": {"type": "number"},
                "velocity_max": {"type": "number"},
                "sigma_r": _NON_NEGATIVE,
                "sigma_v": _NON_NEGATIVE,
                "target_confidence": _BAND_01,
                "clutter_confidence": _BAND_01,
                "feature_noise": _NON_NEGATIVE,
            },
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "required": ["frames"],
            "properties": {
                "snr_db": {"type": ["number", "null"]},
                "frames": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DETECTORS = ["cfar", "montecarlo", "neural"]

MANIFEST_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["scenario", "seeds"],
    "properties": {
        "scenario": {"type": "string", "minLength": 1},
        "detection_scenario": {"type": "string", "minLength": 1},
        "detectors": {
            "type": "array",
            "items": {"type": "string", "enum": DETECTORS},
            "minItems": 1,
            "uniqueItems": True,
        },
        "tracker": {
            "type": "object",
            "properties": {
                "fixed_r": {"type": "boolean"},
                "position_only": {"type": "boolean"},
                "mu": {"type": "number", "minimum": 0, "maximum": 1},
                "gate": _POSITIVE,
            },
            "additionalProperties": False,
        },
        "seeds": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
            "uniqueItems": True,
        },
        "output": {"type": "string", "minLength": 1},
        "snr_db": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 1,
        },
        "pfa": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "minItems": 1,
        },
        "detection_frames": {"type": "integer", "minimum": 1},
        "conf_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "weights": {"type": "string", "minLength": 1},
        "training": {
            "type": "object",
            "properties": {
                "samples": {"type": "integer", "minimum": 2},
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": _POSITIVE,
                "augment_off_epochs": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "workers": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}


def _format_error(e: ValidationError) -> str:
    """Человекочитаемая строка для ошибки jsonschema."""
    loc = " -> ".join(str(p) for p in e.absolute_path) or "<root>"
    return f"{loc}: {e.message}"


def _validate(document: Any, schema: Dict[str, Any]) -> List[str]:
    validator = Draft7Validator(schema)
    return [_format_error(err) for err in sorted(validator.iter_errors(document), key=lambda e: list(e.path))]


def _check_ordered_pairs(scenario: Dict[str, Any]) -> List[str]:
    """min <= max для диапазонов, которые схема проверить не может."""
    errors: List[str] = []
    clutter = scenario.get("clutter", {})
    for low, high in (("range_min", "range_max"), ("velocity_min", "velocity_max")):
        if low in clutter and high in clutter and clutter[low] > clutter[high]:
            errors.append(f"clutter: '{low}' ({clutter[low]}) exceeds '{high}' ({clutter[high]})")
    for name in ("target_confidence", "clutter_confidence"):
        band = clutter.get(name)
        if isinstance(band, list) and len(band) == 2 and band[0] > band[1]:
            errors.append(f"clutter: '{name}' lower bound exceeds upper bound")
    band = scenario.get("targets", {}).get("random")
    if isinstance(band, list) and len(band) == 2 and band[0] > band[1]:
        errors.append("targets: 'random' minimum exceeds maximum")
    return errors


def validate_scenario(scenario: Dict[str, Any]) -> Tuple[bool, List[str]]:
    """
    Проверяет разобранный сценарий по JSON-схеме.
    Возвращает (is_valid, errors[]).
    """
    errors = _validate(scenario, SCENARIO_SCHEMA)
    if not errors:
        errors.extend(_check_ordered_pairs(scenario))
    return (len(errors) == 0, errors)


def validate_manifest(manifest: Dict[str, Any]) -> Tuple[bool, List[str]]:
    """Проверяет YAML-манифест e2e-прогона. Возвращает (is_valid, errors[])."""
    errors = _validate(manifest, MANIFEST_SCHEMA)
    return (len(errors) == 0, errors)
