"""Run-configuration loading, schema validation and normalization.

Configs are JSON files with nested sections mirroring the model types.
Unknown keys are rejected at every level; sweep axes may be explicit value
lists or {start, stop, num, scale} range descriptions that are expanded
during resolution.  CLI flags override the ``output``, ``threads`` and
``seed`` sections.
"""

from __future__ import annotations

import copy
import json
import math

import numpy as np
from jsonschema import Draft202012Validator

SCENARIOS = ("cw_single", "pulsed_single", "ensemble", "hyperfine")


class ConfigError(Exception):
    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.message = message
        self.path = path

    def to_json(self) -> dict:
        return {"error": "config", "path": self.path, "message": self.message}


_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_AXIS = {
    "oneOf": [
        {"type": "array", "items": _NUMBER, "minItems": 1},
        {
            "type": "object",
            "properties": {
                "start": _NUMBER,
                "stop": _NUMBER,
                "num": {"type": "integer", "minimum": 1},
                "scale": {"enum": ["linear", "log"]},
            },
            "required": ["start", "stop", "num"],
            "additionalProperties": False,
        },
    ]
}
_RANGE = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}

_RATES_SECTION = {
    "type": "object",
    "properties": {name: _POSITIVE for name in ("gamma", "k0", "k1", "d0", "d1")},
    "additionalProperties": False,
}
_OUTPUT_SECTION = {
    "type": "object",
    "properties": {
        "path": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
    },
    "additionalProperties": False,
}

_SCENARIO_PARAMS = {
    "cw_single": {
        "type": "object",
        "properties": {
            "t2star": _POSITIVE,
            "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
            "background": {"type": "number", "minimum": 0},
        },
        "required": ["t2star", "epsilon", "background"],
        "additionalProperties": False,
    },
    "pulsed_single": {
        "type": "object",
        "properties": {
            "t2star": _POSITIVE,
            "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
            "background": {"type": "number", "minimum": 0},
            "s": _POSITIVE,
            "t_w": {"type": "number", "minimum": 0},
            "t_pi": _POSITIVE,
            "t_l": _POSITIVE,
            "tau": _POSITIVE,
        },
        "required": ["t2star", "epsilon", "background", "s", "t_w"],
        "additionalProperties": False,
    },
    "ensemble": {
        "type": "object",
        "properties": {
            "waist_um": _POSITIVE,
            "power_mw": _POSITIVE,
            "nv_density_ppb": _POSITIVE,
            "t2star": _POSITIVE,
            "thickness_um": _POSITIVE,
            "epsilon_max": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "saturation_intensity": _POSITIVE,
            "background_alpha": {"type": "number", "minimum": 0},
            "t_w": {"type": "number", "minimum": 0},
            "protocols": {
                "type": "array",
                "items": {"enum": ["cw", "pulsed"]},
                "minItems": 1,
            },
            "n_shells": {"type": "integer", "minimum": 50},
        },
        "additionalProperties": False,
    },
    "hyperfine": {
        "type": "object",
        "properties": {
            "mode": {"enum": ["ratio", "ensemble_linewidth"]},
            "contrast": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "splitting_mhz": _POSITIVE,
            "kinds": {
                "type": "array",
                "items": {"enum": ["lorentzian", "gaussian"]},
                "minItems": 1,
            },
        },
        "additionalProperties": False,
    },
}

_SWEEP_AXES = {
    "cw_single": ("s", "rabi_mhz"),
    "pulsed_single": ("t_pi", "t_l", "tau", "s"),
    "ensemble": ("power_mw", "waist_um", "alpha"),
    "hyperfine": ("fwhm_mhz", "power_mw"),
}

_OPTIMIZE_SECTION = {
    "type": "object",
    "properties": {
        "s_range": _RANGE,
        "rabi_range_mhz": _RANGE,
        "t_l_range": _RANGE,
        "fraction_range": _RANGE,
        "coarse": {"type": "integer", "minimum": 3},
        "rel_tol": _POSITIVE,
    },
    "additionalProperties": False,
}


def _schema_for(scenario: str) -> dict:
    return {
        "type": "object",
        "properties": {
            "scenario": {"const": scenario},
            "rates": _RATES_SECTION,
            "params": _SCENARIO_PARAMS[scenario],
            "sweep": {
                "type": "object",
                "properties": {axis: _AXIS for axis in _SWEEP_AXES[scenario]},
                "additionalProperties": False,
            },
            "optimize": _OPTIMIZE_SECTION,
            "output": _OUTPUT_SECTION,
            "threads": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer"},
        },
        "required": ["scenario", "params"],
        "additionalProperties": False,
    }


DEFAULTS = {
    "rates": {"gamma": 66.50, "k0": 10.78, "k1": 91.07, "d0": 4.835, "d1": 1.063},
    "sweep": {},
    "optimize": {},
    "output": {"path": "results.csv", "format": "csv"},
    "threads": 1,
    "seed": 0,
}

_PARAM_DEFAULTS = {
    "pulsed_single": {"t_w": 1.0},
    "ensemble": {
        "waist_um": 100.0, "power_mw": 100.0, "nv_density_ppb": 300.0, "t2star": 1.0,
        "thickness_um": 500.0, "epsilon_max": 0.01, "saturation_intensity": 1.1,
        "background_alpha": 0.0, "t_w": 1.0, "protocols": ["cw", "pulsed"],
        "n_shells": 200,
    },
    "hyperfine": {"mode": "ratio", "contrast": 0.2, "splitting_mhz": 2.16,
                  "kinds": ["lorentzian", "gaussian"]},
}


def expand_axis(spec) -> list:
    """Expand a sweep-axis description into an explicit list of floats."""
    if isinstance(spec, list):
        return [float(v) for v in spec]
    scale = spec.get("scale", "linear")
    if spec["num"] == 1:
        return [float(spec["start"])]
    if scale == "log":
        if spec["start"] <= 0 or spec["stop"] <= 0:
            raise ConfigError("log-scaled axes need positive endpoints", "$.sweep")
        values = np.geomspace(spec["start"], spec["stop"], spec["num"])
    else:
        values = np.linspace(spec["start"], spec["stop"], spec["num"])
    return [float(v) for v in values]


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON (line {err.lineno}, column {err.colno}): {err.msg}") from None


def validate_config(raw: dict) -> dict:
    """Validate a raw config and return the fully resolved copy.

    Resolution applies defaults, expands sweep axes, and is deterministic;
    the resolved dict is what gets hashed into result metadata.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}", "$.scenario")

    validator = Draft202012Validator(_schema_for(scenario))
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise ConfigError(err.message, path)

    resolved = copy.deepcopy(DEFAULTS)
    resolved["scenario"] = scenario
    resolved["params"] = copy.deepcopy(_PARAM_DEFAULTS.get(scenario, {}))
    for section in ("rates", "params", "output"):
        resolved[section].update(copy.deepcopy(raw.get(section, {})))
    resolved["optimize"] = copy.deepcopy(raw.get("optimize", {}))
    for key in ("threads", "seed"):
        if key in raw:
            resolved[key] = raw[key]
    resolved["sweep"] = {axis: expand_axis(spec) for axis, spec in raw.get("sweep", {}).items()}

    _check_scenario_consistency(resolved)
    return resolved


def _check_scenario_consistency(resolved: dict) -> None:
    scenario = resolved["scenario"]
    sweep = resolved["sweep"]
    for axis, values in sweep.items():
        if len(values) == 0:
            raise ConfigError(f"sweep axis {axis!r} is empty", "$.sweep")
    if scenario == "cw_single" and not resolved["optimize"]:
        missing = [axis for axis in ("s", "rabi_mhz") if axis not in sweep]
        if missing:
            raise ConfigError(f"cw_single sweeps need axes {missing} (or an 'optimize' section)",
                              "$.sweep")
    if scenario == "pulsed_single":
        params = resolved["params"]
        if "t_pi" in sweep:
            for key in ("t_l", "tau"):
                if key not in params:
                    raise ConfigError(f"sweeping t_pi requires fixed params.{key}", "$.params")
        elif "t_l" in sweep or "tau" in sweep:
            if "t_pi" not in params:
                raise ConfigError("sweeping t_l/tau requires fixed params.t_pi", "$.params")
        elif "s" not in sweep and not resolved["optimize"]:
            raise ConfigError("pulsed_single needs a sweep axis or an 'optimize' section", "$.sweep")
    if scenario == "hyperfine" and resolved["params"]["mode"] == "ratio":
        if "fwhm_mhz" not in sweep:
            raise ConfigError("hyperfine ratio mode needs a fwhm_mhz sweep axis", "$.sweep")
