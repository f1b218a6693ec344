"""Experiment configuration: JSON schema, defaults and a stable hash.

Configs are validated against :data:`SCHEMA` before defaults are filled in,
so misspelled keys are rejected instead of silently ignored.  The hash is
taken over the resolved config (defaults included, seed included).
"""

import copy
import hashlib
import json

import jsonschema

from ..charts import CHART_KINDS
from ..errors import ConfigError

EXPERIMENTS = ("sharpness", "flow", "density", "laplace", "newton", "metric-transform")

_number_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_matrix = {"type": "array", "items": _number_list, "minItems": 1}

_chart = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(CHART_KINDS)},
        "alpha": {"type": "number"},
        "split": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.2},
        "A": _matrix,
        "b": _number_list,
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_loss = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["dinh", "quadratic", "log_quadratic", "mlp"]},
        "dim": {"type": "integer", "minimum": 1},
        "A": _matrix,
        "center": _number_list,
        "c": _number_list,
        "point": _number_list,
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_model = {
    "type": "object",
    "properties": {
        "hidden": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "noise": {"type": "number", "minimum": 0},
        "epochs": {"type": "integer", "minimum": 0},
        "lr": {"type": "number", "minimum": 0},
        "weight_decay": {"type": "number", "minimum": 0},
        "fisher_damping": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "charts": {"type": "array", "items": _chart, "minItems": 1},
        "loss": _loss,
        "metric": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["euclidean", "conformal", "ggn", "empirical_fisher"]},
                "damping": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "metrics": {
            "type": "array", "minItems": 1,
            "items": {"enum": ["ggn", "empirical_fisher", "family_b", "ggn_diag", "damped_ggn"]},
        },
        "damping": {"type": "number", "exclusiveMinimum": 0},
        "density": {
            "type": "object",
            "properties": {"mean": _number_list, "cov": _matrix},
            "required": ["mean", "cov"],
            "additionalProperties": False,
        },
        "theta0": _number_list,
        "integrator": {"enum": ["euler", "rk4"]},
        "step_sizes": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "trials": {"type": "integer", "minimum": 1},
        "max_steps": {"type": "integer", "minimum": 1},
        "model": _model,
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "format": {"enum": ["csv", "json"]},
                "plot": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_MODEL_DEFAULTS = {"hidden": 16, "m": 150, "noise": 0.3, "epochs": 1000, "lr": 1e-2,
                   "weight_decay": 0.0, "fisher_damping": 1e-3}

DEFAULTS = {
    "sharpness": {
        "charts": [{"kind": "layer_scale", "alpha": 2.0, "split": 1}],
        "loss": {"kind": "dinh"},
        "metric": {"kind": "euclidean"},
    },
    "flow": {
        "charts": [{"kind": "elementwise_exp"}],
        "loss": {"kind": "quadratic", "dim": 1, "center": [0.5]},
        "metric": {"kind": "euclidean"},
        "theta0": [1.0],
        "integrator": "rk4",
        "step_sizes": [0.1, 0.05, 0.025, 0.0125],
        "horizon": 1.0,
    },
    "density": {
        "charts": [{"kind": "elementwise_exp"}, {"kind": "softplus"}],
        "density": {"mean": [0.0], "cov": [[1.0]]},
    },
    "laplace": {
        "charts": [{"kind": "affine", "A": [[2.0]], "b": [0.0]}],
        "loss": {"kind": "quadratic", "dim": 1, "A": [[1.0]], "center": [0.0]},
    },
    "newton": {
        "charts": [{"kind": "elementwise_log"}],
        "loss": {"kind": "log_quadratic", "dim": 1},
        "theta0": [1.0],
        "trials": 10,
        "max_steps": 50,
    },
    "metric-transform": {
        "charts": [{"kind": "identity"}, {"kind": "layer_scale", "alpha": 2.0, "split": 2},
                   {"kind": "elementwise_exp"}, {"kind": "triangular_poly", "seed": 0, "eps": 0.1}],
        "metrics": ["ggn", "empirical_fisher", "family_b", "ggn_diag", "damped_ggn"],
        "damping": 1e-2,
        "model": {"hidden": 3, "m": 20},
    },
}


def _path(error):
    parts = [str(p) for p in error.absolute_path]
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        parts.append(extra[0] if extra else "")
    return ".".join(parts) or "<root>"


def validate(raw):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        message = "unknown key" if err.validator == "additionalProperties" else err.message
        raise ConfigError(_path(err), message)


def resolve(raw, experiment=None, seed=None):
    """Validate ``raw`` and fill in defaults for ``experiment``."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    validate(raw)
    declared = raw.get("experiment")
    if experiment is None:
        experiment = declared
    if experiment is None:
        raise ConfigError("experiment", "no experiment given")
    if declared is not None and declared != experiment:
        raise ConfigError("experiment", f"config is for {declared!r}, not {experiment!r}")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    cfg = copy.deepcopy(DEFAULTS[experiment])
    for key, value in raw.items():
        cfg[key] = copy.deepcopy(value)
    cfg["experiment"] = experiment
    cfg["seed"] = int(seed if seed is not None else raw.get("seed", 0))
    if "model" in cfg or cfg.get("loss", {}).get("kind") == "mlp":
        cfg["model"] = {**_MODEL_DEFAULTS, **cfg.get("model", {})}
    out = cfg.setdefault("output", {})
    out.setdefault("format", "csv")
    out.setdefault("plot", False)
    return cfg


def load(path, experiment=None, seed=None):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from None
    return resolve(raw, experiment, seed)


def config_hash(cfg):
    """First 16 hex digits of SHA-256 over the canonical JSON, ignoring output settings."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
