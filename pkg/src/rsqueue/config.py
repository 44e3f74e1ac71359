"""Run configurations: JSON documents checked against a per-command schema.

Values are layered as defaults < config file < ``RSQ_*`` environment
variables < command-line flags, and the merged document is validated before
anything runs.  Unknown keys are rejected.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os

import jsonschema

ENV_PREFIX = "RSQ_"

# keys that change how a run is executed but not what it computes
EXECUTION_KEYS = ("workers", "out")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_COUNT = {"type": "integer", "minimum": 1}

SERVICE = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["deterministic", "exponential", "uniform", "gamma", "lognormal"]},
        "v": _POS, "mean": _POS, "lo": _NUM, "hi": _NUM, "shape": _POS, "scale": _POS,
        "mu": _NUM, "sigma": _POS,
    },
    "additionalProperties": False,
}

SCATTER = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["uniform", "exponential", "sub_probability"]},
        "lo": _NUM, "hi": _NUM, "rate": _POS,
        "base": {"type": "object"},
        "mass": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}

COMMON = {
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "workers": _COUNT,
    "out": {"type": "string"},
}

LDP_KEYS = {"t": _POS, "x": _POS, "c_rate": _POS, "service": SERVICE, "scatter": SCATTER,
            "points": {"type": "integer", "minimum": 10}}

COMMANDS = {
    "simulate": {
        "required": ["n", "service", "scatter"],
        "properties": {"n": _COUNT, "service": SERVICE, "scatter": SCATTER, "c_rate": _POS, "a": _NUM,
                       "t_end": _POS, "points": {"type": "integer", "minimum": 2}, "reps": _COUNT,
                       "keep_paths": {"type": "integer", "minimum": 0}},
        "defaults": {"a": 0.0, "t_end": 1.0, "points": 201, "reps": 4, "keep_paths": 4},
    },
    "fluid": {
        "required": ["service", "scatter"],
        "properties": {"service": SERVICE, "scatter": SCATTER, "rho": _POS, "t_end": _POS,
                       "points": {"type": "integer", "minimum": 2}},
        "defaults": {"t_end": 1.0, "points": 201},
    },
    "transient": {
        "required": ["t"],
        "properties": {"t": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}, "d": _NUM,
                       "service": SERVICE, "lam_max": _POS, "lam_points": {"type": "integer", "minimum": 2},
                       "mc_paths": {"type": "integer", "minimum": 0}, "cells": _COUNT},
        "defaults": {"d": 0.0, "service": {"kind": "exponential", "mean": 1.0}, "lam_max": 3.0,
                     "lam_points": 61, "mc_paths": 100_000, "cells": 256},
    },
    "tail": {
        "required": ["c", "x", "scv"],
        "properties": {"c": {"type": "number", "minimum": 0},
                       "x": {"oneOf": [_POS, {"type": "array", "items": _POS, "minItems": 1}]},
                       "scv": {"type": "number", "minimum": 0},
                       "mc_paths": {"type": "integer", "minimum": 0}},
        "defaults": {"mc_paths": 1_000_000},
    },
    "ldp": {
        "required": ["t", "x", "c_rate"],
        "properties": LDP_KEYS,
        "defaults": {"service": {"kind": "exponential", "mean": 1.0}, "scatter": {"kind": "uniform"},
                     "points": 1000},
    },
    "rare-path": {
        "required": ["t", "x", "c_rate"],
        "properties": {**LDP_KEYS, "mc_reps": {"type": "integer", "minimum": 0}},
        "defaults": {"service": {"kind": "exponential", "mean": 1.0}, "scatter": {"kind": "uniform"},
                     "points": 1000, "mc_reps": 0},
    },
    "is-estimate": {
        "required": ["t", "x", "c_rate", "n"],
        "properties": {**LDP_KEYS, "n": _COUNT, "reps": {"type": "integer", "minimum": 1000},
                       "crude_reps": {"type": "integer", "minimum": 0}},
        "defaults": {"service": {"kind": "exponential", "mean": 1.0}, "scatter": {"kind": "uniform"},
                     "points": 1000, "reps": 100_000, "crude_reps": 0},
    },
    "periodic": {
        "required": ["a"],
        "properties": {"a": _NUM, "mean": _POS, "variance": {"type": "number", "minimum": 0},
                       "t": {"type": "number", "minimum": 1}, "lam_max": _POS,
                       "lam_points": {"type": "integer", "minimum": 2},
                       "mc_paths": {"type": "integer", "minimum": 0}, "cells_per_period": _COUNT},
        "defaults": {"mean": 1.0, "variance": 0.0, "t": 1.0, "lam_max": 3.0, "lam_points": 61,
                     "mc_paths": 0, "cells_per_period": 64},
    },
    "validate": {
        "required": [],
        "properties": {"scale": {"enum": ["quick", "full"]},
                       "criteria": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 9},
                                    "uniqueItems": True},
                       "tolerances": {"type": "object", "additionalProperties": _NUM}},
        "defaults": {"scale": "quick", "criteria": list(range(1, 10)), "tolerances": {}, "seed": 20240501},
    },
}

COMMON_DEFAULTS = {"seed": 0, "workers": 1, "out": "out"}


class ConfigError(ValueError):
    """The run configuration is malformed or fails schema validation."""


def schema_for(command: str) -> dict:
    entry = COMMANDS[command]
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": list(entry["required"]),
        "properties": {**COMMON, **entry["properties"]},
        "additionalProperties": False,
    }


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def env_overrides(environ=None) -> dict:
    """``RSQ_KEY=value`` sets ``key``; ``RSQ_SERVICE__MEAN=2`` sets a nested key.

    Values are parsed as JSON when possible, otherwise kept as strings.
    """
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX) or len(name) == len(ENV_PREFIX):
            continue
        path = [part.lower() for part in name[len(ENV_PREFIX):].split("__")]
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment variable {name} conflicts with a scalar override")
        node[path[-1]] = _parse_env_value(raw)
    return out


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        # a model given with its own "kind" replaces the old one instead of merging parameters
        if isinstance(value, dict) and isinstance(out.get(key), dict) and "kind" not in value:
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _describe(error: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in error.absolute_path) or "<root>"
    return f"{where}: {error.message}"


def validate(command: str, config: dict) -> dict:
    validator = jsonschema.Draft202012Validator(schema_for(command))
    errors = sorted(validator.iter_errors(config), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(_describe(e) for e in errors))
    return config


def load_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def resolve(command: str, file_config: dict | None = None, flags: dict | None = None,
            environ=None) -> dict:
    """Merge defaults, file, environment and flags, then validate."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    config = _merge(COMMON_DEFAULTS, COMMANDS[command]["defaults"])
    config = _merge(config, file_config or {})
    config = _merge(config, env_overrides(environ))
    config = _merge(config, {k: v for k, v in (flags or {}).items() if v is not None})
    return validate(command, config)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON of everything except execution keys."""
    payload = {k: v for k, v in config.items() if k not in EXECUTION_KEYS}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
