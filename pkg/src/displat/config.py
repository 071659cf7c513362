"""Run configuration for the command-line harness.

A config is a JSON object validated against :data:`CONFIG_SCHEMA`. Missing
sections and keys take the defaults in :data:`DEFAULTS`; the merged result
is what every report embeds. Paths are resolved relative to the config file.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .lattice import CompactPotential

COMMANDS = ("classify", "decay", "resolvent-check", "expansion-check")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "displat run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "potential": {"type": ["string", "null"],
                      "description": "potential file, relative to the config file"},
        "seed": {"type": "integer", "minimum": 0},
        "classify": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "tol": _pos, "route_tol": _pos, "residual_tol": _pos,
                "margin": {"type": "integer", "minimum": 3},
                "truncation_radius": {"type": ["integer", "null"]},
            },
        },
        "decay": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["free", "potential"]},
                "flow": {"enum": ["bilaplacian", "laplacian", "cos", "sinc"]},
                "kind": {"enum": ["schrodinger", "halfwave", "cos", "sinc"]},
                "fit_window": _pair,
                "samples": {"type": "integer", "minimum": 2},
                "window": {"type": "integer", "minimum": 5},
                "delta_edge": {"type": "number", "minimum": 0},
                "wavefront": {"enum": ["raise", "report"]},
                "block_margin": {"type": "integer", "minimum": 0},
                "expected_exponent": {"type": ["number", "null"]},
                "exponent_tol": _pos,
            },
        },
        "resolvent": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "mu": {"type": ["array", "null"], "items": _pos},
                "samples": {"type": "integer", "minimum": 1},
                "half_width": {"type": "integer", "minimum": 2},
                "free_tol": _pos, "split_tol": _pos, "perturbed_tol": _pos,
                "offaxis_eps": _pos, "offaxis_tol": _pos,
            },
        },
        "expansion": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "cases": {
                    "type": "array",
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["threshold", "N"],
                        "properties": {
                            "threshold": {"enum": [0, 16]},
                            "N": {"type": "integer"},
                            "s": {"type": ["number", "null"]},
                            "order_tol": _pos,
                        },
                    },
                },
                "mus": {"type": "array", "items": _pos, "minItems": 2},
                "half_width": {"type": "integer", "minimum": 5},
                "singularity": {
                    "type": ["object", "null"], "additionalProperties": False,
                    "properties": {
                        "threshold": {"enum": [0, 16]},
                        "sign": {"enum": ["+", "-"]},
                        "expected": {"type": ["number", "null"]},
                        "tol": _pos,
                    },
                },
            },
        },
    },
}

DEFAULTS = {
    "command": None,
    "potential": None,
    "seed": 0,
    "classify": {"tol": 1e-8, "route_tol": 1e-8, "residual_tol": 1e-8, "margin": 50,
                 "truncation_radius": None},
    "decay": {"mode": "free", "flow": "bilaplacian", "kind": "schrodinger",
              "fit_window": [100.0, 10000.0], "samples": 25, "window": 4096,
              "delta_edge": 0.0, "wavefront": "raise", "block_margin": 32,
              "expected_exponent": None, "exponent_tol": 0.05},
    "resolvent": {"mu": None, "samples": 20, "half_width": 30, "free_tol": 1e-10,
                  "split_tol": 1e-12, "perturbed_tol": 1e-9, "offaxis_eps": 1e-6,
                  "offaxis_tol": 1e-4},
    "expansion": {"cases": [{"threshold": 0, "N": 3, "s": None, "order_tol": 0.5},
                            {"threshold": 16, "N": 1, "s": None, "order_tol": 0.3}],
                  "mus": [0.2, 0.1, 0.05, 0.025], "half_width": 200,
                  "singularity": None},
}


class ConfigError(ValueError):
    """The configuration is malformed or names a missing file."""


@dataclass
class RunConfig:
    command: str
    data: dict
    base_dir: Path

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def section(self, name: str) -> dict:
        return self.data[name]

    @property
    def potential_path(self) -> Path | None:
        p = self.data["potential"]
        return None if p is None else (self.base_dir / p)

    def load_potential(self) -> CompactPotential:
        path = self.potential_path
        return CompactPotential.zero() if path is None else load_potential(path, self.seed)

    def effective(self) -> dict:
        """The merged config with the command filled in (what reports embed)."""
        out = copy.deepcopy(self.data)
        out["command"] = self.command
        return out


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(data: dict, command: str, base_dir=".") -> RunConfig:
    """Validate ``data``, fill defaults and check that referenced files exist."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from None
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if data.get("command") not in (None, command):
        raise ConfigError(f"config is for {data['command']!r}, not {command!r}")
    merged = _merge(DEFAULTS, data)
    cfg = RunConfig(command, merged, Path(base_dir))
    if cfg.potential_path is not None and not cfg.potential_path.is_file():
        raise ConfigError(f"potential file {cfg.potential_path} does not exist")
    return cfg


def load_config(path, command: str) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, command, path.parent)


def load_potential(path, seed: int = 0) -> CompactPotential:
    """Read a potential file.

    Either the explicit form {"n0": int, "values": [...]} or a generator
    {"generator": "random_regular", "seed": int, "amplitude": x, "radius": r};
    a generator without its own seed uses ``seed``.
    """
    data = json.loads(Path(path).read_text())
    if "generator" in data:
        from .potentials import random_regular
        if data["generator"] != "random_regular":
            raise ConfigError(f"unknown generator {data['generator']!r}")
        return random_regular(int(data.get("seed", seed)), float(data.get("amplitude", 0.1)),
                              int(data.get("radius", 2)))
    if "n0" not in data or "values" not in data:
        raise ConfigError(f"{path}: potential needs 'n0' and 'values'")
    return CompactPotential.from_dict(data)


def write_schema(path) -> None:
    Path(path).write_text(json.dumps(CONFIG_SCHEMA, indent=2) + "\n")
