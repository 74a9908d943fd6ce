"""Declarative experiment configuration: JSON schema, loading and model builders.

Infinite values (``beta``, ``omega_c``) are written as ``null`` in JSON.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .bath import Lorentzian, OhmicExpCutoff, SpectralDensity, Tabulated
from .chain import ChainModel
from .greens import DEFAULT_ETA, FrequencyGrid, TimeGrid

PIPELINES = ("simulate", "reconstruct", "verify-wick", "sensitivity", "continue")


class ConfigError(ValueError):
    """The configuration is invalid or refers to missing files."""


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_OR_INF = {"anyOf": [_POS, {"type": "null"}]}
_NONNEG = {"type": "number", "minimum": 0}
_INT_POS = {"type": "integer", "minimum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario"],
    "properties": {
        "scenario": {"type": "string", "minLength": 1},
        "pipeline": {"enum": list(PIPELINES)},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "threads": _INT_POS,
        "eta": _POS,
        "chain": {
            "type": "object", "additionalProperties": False,
            "properties": {"n_sites": _INT_POS, "mass": _POS, "omega_r": _POS, "coupling": _NONNEG},
        },
        "bath": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "family": {"enum": ["ohmic", "lorentzian", "tabulated"]},
                "alpha": _NONNEG, "omega_c": _POS_OR_INF,
                "weight": _NONNEG, "center": _NUM, "width": _POS,
                "path": {"type": "string"},
                "beta": _POS_OR_INF,
                "n_modes": _INT_POS,
                "band": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
            },
        },
        "grid": {
            "type": "object", "additionalProperties": False,
            "required": ["omega_min", "omega_max", "n_points"],
            "properties": {"omega_min": _NUM, "omega_max": _NUM, "n_points": {"type": "integer", "minimum": 2}},
        },
        "time_grid": {
            "type": "object", "additionalProperties": False,
            "required": ["t_max", "dt"],
            "properties": {"t_max": _POS, "dt": _POS},
        },
        "source": {"enum": ["analytic", "oracle"]},
        "oracle": {
            "type": "object", "additionalProperties": False,
            "properties": {"fock_cut": {"type": "integer", "minimum": 2}, "chi": _NONNEG,
                           "lambda_b": _NUM, "dimension_cap": _INT_POS},
        },
        "inputs": {
            "type": "object", "additionalProperties": False,
            "required": ["g_sb", "g_b0"],
            "properties": {"g_sb": {"type": "string"}, "g_b0": {"type": "string"},
                           "truth": {"type": "string"}},
        },
        "wick": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "quadruples": {"type": "array", "items": {"type": "array", "items": _NUM,
                                                           "minItems": 4, "maxItems": 4}},
                "n_random": _INT_POS,
                "t_span": _POS,
                "threshold": _POS,
            },
        },
        "sensitivity": {
            "type": "object", "additionalProperties": False,
            "properties": {"target": {"enum": ["bath", "system"]},
                           "sigmas": {"type": "array", "items": _NONNEG, "minItems": 1},
                           "n_trials": _INT_POS},
        },
        "continuation": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "input": {"type": "string"},
                "beta": _POS,
                "n_max": {"type": "integer", "minimum": 4},
                "pole": {"type": "object", "additionalProperties": False,
                         "required": ["position", "width"],
                         "properties": {"position": _NUM, "width": _NONNEG}},
                "constant": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "spurious_tol": _POS,
            },
        },
    },
}


def _inf(x):
    return np.inf if x is None else float(x)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated configuration; ``base_dir`` resolves relative input paths."""

    data: dict
    base_dir: Path

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        cfg = cls(copy.deepcopy(data), Path(base_dir))
        cfg._check_files()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, path.parent)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_dict(data, self.base_dir)

    def _check_files(self):
        for p in self.referenced_files():
            if not p.exists():
                raise ConfigError(f"referenced file {p} does not exist")

    def referenced_files(self) -> list[Path]:
        paths = []
        inputs = self.data.get("inputs", {})
        paths += [inputs[k] for k in ("g_sb", "g_b0", "truth") if k in inputs]
        if self.data.get("bath", {}).get("family") == "tabulated":
            if "path" not in self.data["bath"]:
                raise ConfigError("tabulated bath needs a path")
            paths.append(self.data["bath"]["path"])
        if "input" in self.data.get("continuation", {}):
            paths.append(self.data["continuation"]["input"])
        return [self.resolve(p) for p in paths]

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def eta(self) -> float:
        return float(self.data.get("eta", DEFAULT_ETA))

    def chain(self) -> ChainModel:
        c = self.section("chain")
        return ChainModel(c.get("n_sites", 1), c.get("mass", 1.0), c.get("omega_r", 1.0), c.get("coupling", 0.0))

    def spectral_density(self) -> SpectralDensity:
        b = self.section("bath")
        family = b.get("family", "ohmic")
        if family == "ohmic":
            return OhmicExpCutoff(b.get("alpha", 0.0), _inf(b.get("omega_c", 50.0)))
        if family == "lorentzian":
            for key in ("weight", "center", "width"):
                if key not in b:
                    raise ConfigError(f"lorentzian bath needs '{key}'")
            return Lorentzian(b["weight"], b["center"], b["width"])
        return Tabulated.from_csv(self.resolve(b["path"]))

    @property
    def beta(self) -> float:
        return _inf(self.section("bath").get("beta"))

    def grid(self) -> FrequencyGrid:
        if "grid" not in self.data:
            raise ConfigError("this pipeline needs a 'grid' section")
        g = self.data["grid"]
        try:
            return FrequencyGrid(g["omega_min"], g["omega_max"], g["n_points"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def time_grid(self) -> TimeGrid:
        if "time_grid" not in self.data:
            raise ConfigError("this pipeline needs a 'time_grid' section")
        t = self.data["time_grid"]
        return TimeGrid.with_spacing(t["t_max"], t["dt"])

    def require_seed(self) -> int:
        if "seed" not in self.data:
            raise ConfigError("stochastic pipelines need a 'seed'")
        return int(self.data["seed"])
