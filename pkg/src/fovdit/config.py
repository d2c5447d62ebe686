"""JSON run configuration: sections, defaults, and strict validation.

Every known key has a default below; unknown sections or keys are
rejected before any work starts. `null` leaves a key at its default.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

DEFAULTS: dict = {
    "codec": {
        "patch": 4,
    },
    "model": {
        "depth": 6,
        "width": 128,
        "heads": 4,
        "num_classes": 8,
        "time_embed_dim": 256,
        "rope_theta": 10000.0,
        "rope_site": "top_left",
    },
    "train": {
        "steps": 2000,
        "batch": 16,
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "strategy": "randomized",
        "radius_frac_min": 0.25,
        "radius_frac_max": 0.6,
        "budget_min": 0.25,
        "budget_max": 0.5,
        "max_boxes": 3,
        "seed": 0,
        "dataset_seed": 1234,
        "dataset_size": 8192,
        "norm_samples": 1024,
        "checkpoint_every": 0,
        "image_size": 64,
        "frames": 1,
    },
    "sample": {
        "steps": 50,
        "seed": 0,
        "class_id": 0,
        "mode": "foveated",
    },
    "mask": {
        "kind": "ones",
        "center": None,
        "radius": None,
        "top_left": None,
        "bottom_right": None,
        "boxes": None,
        "control_points": None,
        "budget": None,
        "saliency_file": None,
    },
    "bench": {
        "ratios": [1.0, 0.75, 0.5, 0.44, 0.3, 0.25],
        "reps": 20,
        "warmup": 3,
        "threads": 1,
    },
}


class ConfigError(ValueError):
    """Unknown key, wrong type, or unreadable configuration document."""


def _check_types(section: str, key: str, value, default):
    if value is None or default is None:
        return
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"{section}.{key}: expected bool, got {type(value).__name__}")
    if isinstance(default, (int, float)) and not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected number, got {type(value).__name__}")
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{section}.{key}: expected string, got {type(value).__name__}")
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{section}.{key}: expected list, got {type(value).__name__}")


def validate(doc: dict) -> dict:
    """Merge a parsed document over the defaults, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be an object, got {type(doc).__name__}")
    merged = copy.deepcopy(DEFAULTS)
    for section, body in doc.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in body.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            _check_types(section, key, value, DEFAULTS[section][key])
            if value is not None:
                merged[section][key] = value
    return merged


def load(path: str | Path | None) -> dict:
    """Read and validate a config file; None yields pure defaults."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate(doc)
