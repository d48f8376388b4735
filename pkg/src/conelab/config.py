"""Experiment configuration: a single JSON document with nested sections.

Schema (all sections optional unless a command requires them):

    {
      "command":  "solve-elliptic" | "solve-heat" | "verify-schauder"
                  | "flow" | "sweep",
      "angles":   {"betas": [0.75], "n": 2},
      "grid":     {"n_radial": 32, "n_theta": 8, "n_tangential": 9,
                   "radius": 1.0, "tangential_halfwidth": 1.0,
                   "tangential_periodic": false},
      "time":     {"T": 0.05, "n_steps": 64, "theta": 0.5, "grading": null},
      "fields":   {"f": "zero", "phi": "re_z:0", "u0": "zero"},
      "alphas":   [0.2],
      "tolerances": {"solver": 1e-10},
      "seed":     0,
      "flow":     {"chi": 0.5, "dt": 1e-3, "T": 0.05, "eps_ball": 1.0},
      "sweep":    {"command": "verify-schauder",
                   "grid_params": {"angles.betas": [[0.6],[0.75],[0.9]]}},
      "diagnostics": ["max_principle", "epsilon_ladder"]
    }

Field selectors are names from `fields.REGISTRY` with colon-separated
numeric arguments.  normalize() fills defaults and sorts keys; the
serialized normalized form is a fixed point of parse -> normalize ->
serialize -> parse.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

from .fields import REGISTRY

COMMANDS = ("solve-elliptic", "solve-heat", "verify-schauder", "flow", "sweep")

DEFAULTS = {
    "angles": {"betas": [0.75], "n": 2},
    "grid": {"n_radial": 24, "n_theta": 8, "n_tangential": 9, "radius": 1.0,
             "tangential_halfwidth": 1.0, "tangential_periodic": False,
             "domain": "polydisk"},
    "time": {"T": 0.05, "n_steps": 48, "theta": 0.5, "grading": None},
    "fields": {"f": "zero", "phi": "zero", "u0": "zero"},
    "alphas": [0.2],
    "tolerances": {"solver": 1e-10},
    "seed": 0,
    "flow": {"chi": 0.0, "dt": 1e-3, "T": 0.05, "eps_ball": 1.0,
             "n_radial": 16, "n_tangential": 9},
    "diagnostics": [],
    "sweep": None,
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    data: dict

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls(raw).normalize().validate()

    def normalize(self) -> "ExperimentConfig":
        data = copy.deepcopy(DEFAULTS)
        for key, val in self.data.items():
            if key in ("command",):
                data[key] = val
            elif isinstance(val, dict) and isinstance(data.get(key), dict):
                data[key].update(val)
            else:
                data[key] = val
        if "command" not in data:
            raise ConfigError("config needs a 'command'")
        self.data = data
        return self

    def validate(self) -> "ExperimentConfig":
        d = self.data
        if d["command"] not in COMMANDS:
            raise ConfigError(f"unknown command {d['command']!r}")
        betas = d["angles"]["betas"]
        if not betas or any(not (0.0 < b < 1.0) for b in betas):
            raise ConfigError(f"cone angles must lie in (0,1): {betas}")
        if d["angles"]["n"] < len(betas):
            raise ConfigError("ambient dimension n must be >= number of angles")
        for field_key in ("f", "phi", "u0"):
            spec = d["fields"].get(field_key, "zero")
            name = str(spec).split(":")[0]
            if name not in REGISTRY:
                raise ConfigError(f"unknown field builder {name!r} for {field_key}")
        if d["command"] == "sweep":
            sw = d.get("sweep")
            if not sw or "command" not in sw or sw["command"] not in COMMANDS \
                    or sw["command"] == "sweep":
                raise ConfigError("sweep needs an inner non-sweep command")
            if not isinstance(sw.get("grid_params", {}), dict):
                raise ConfigError("sweep.grid_params must be a mapping")
        return self

    def serialize(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]

    def get(self, *path, default=None):
        node = self.data
        for p in path:
            if not isinstance(node, dict) or p not in node:
                return default
            node = node[p]
        return node


def set_by_path(data: dict, dotted: str, value):
    parts = dotted.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
