"""Run configuration: one JSON document with per-module parameter sections.

Angles are given in degrees here and converted to radians on load. Missing
keys fall back to the defaults below; unknown keys are rejected so typos do
not silently change a run.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .objective import TaskConfig, WeightParams
from .optimizer import OptimizerConfig
from .statics import StaticsParams

DEFAULTS = {
    "seed": 0,
    "paths": {
        "topology": None,
        "holds_csv": None,
        "env_model": None,
        "pull_csv": None,
        "solution": None,
        "out_dir": "goat-out",
    },
    "environment": {"width_from": "both-orientations", "synthetic_n": 2000},
    "task": {
        "psi": 12.0,
        "h_upper": 200.0,
        "tip_upper": 50.0,
        "stroke": 30.0,
        "link_lo": 10.0,
        "link_hi": 200.0,
        "theta_lo_deg": -90.0,
        "theta_hi_deg": 90.0,
        "eps_loop": 1e-6,
        "n_samples": 20,
        "grid_points": 4000,
    },
    "statics": {"f_actuator": 80.0, "friction_mu": 1.0, "required_pull": 13.3},
    "weighting": {"alpha": 0.1, "phi": 1.5, "gamma": 3.5},
    "optimizer": {
        "n_bases": 3,
        "scale_lo": 0.05,
        "scale_hi": 2.0,
        "n_scales": 10,
        "n_seeds": 10,
        "perturbation": 0.05,
        "max_outer": 50,
        "max_inner": 500,
        "max_evals": 160,
        "fd_step": 1e-6,
        "feas_tol": 1e-6,
        "margin": 0.05,
    },
    "render": {"omegas": None},
    "gp": {"f_min": 13.3, "eta_lo": 0.001, "eta_hi": 10.0, "hyper": None},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where}{k}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path=None, **overrides) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
        raw = _merge(DEFAULTS, data)
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "seed":
                raw["seed"] = int(value)
            elif key == "out_dir":
                raw["paths"]["out_dir"] = str(value)
            else:
                raise ConfigError(f"unknown override {key}")
        cfg = cls(raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for key in ("topology", "holds_csv", "env_model", "pull_csv"):
            p = self.raw["paths"][key]
            if p is not None and not Path(p).exists():
                raise ConfigError(f"paths.{key}: {p} does not exist")
        try:
            self.task, self.statics, self.weights, self.optimizer
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["paths"]["out_dir"])

    def path(self, key: str):
        p = self.raw["paths"][key]
        return None if p is None else Path(p)

    @property
    def task(self) -> TaskConfig:
        t = dict(self.raw["task"])
        t["theta_lo"] = math.radians(t.pop("theta_lo_deg"))
        t["theta_hi"] = math.radians(t.pop("theta_hi_deg"))
        t["n_samples"] = int(t["n_samples"])
        t["grid_points"] = int(t["grid_points"])
        return TaskConfig(**t)

    @property
    def statics(self) -> StaticsParams:
        return StaticsParams(**self.raw["statics"])

    @property
    def weights(self) -> WeightParams:
        return WeightParams(**self.raw["weighting"])

    @property
    def optimizer(self) -> OptimizerConfig:
        o = dict(self.raw["optimizer"])
        scales = np.round(np.linspace(o.pop("scale_lo"), o.pop("scale_hi"), int(o.pop("n_scales"))), 10)
        n_seeds = int(o.pop("n_seeds"))
        return OptimizerConfig(
            scales=tuple(float(s) for s in scales),
            seeds=tuple(range(self.seed, self.seed + n_seeds)),
            n_bases=int(o.pop("n_bases")),
            max_outer=int(o.pop("max_outer")),
            max_inner=int(o.pop("max_inner")),
            max_evals=int(o.pop("max_evals")),
            **o,
        )

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.raw, indent=2, sort_keys=True) + "\n")
