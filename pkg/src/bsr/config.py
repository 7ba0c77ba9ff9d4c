"""Run-wide configuration: defaults, YAML loading, schema validation."""

from __future__ import annotations

import copy

import yaml

from .expr import DEFAULT_BASIS
from .likelihood import FitConfig
from .prior import PriorFitConfig
from .sampler import DEFAULT_MOVE_PROBS, SamplerConfig, geometric_ladder
from .score import ScoreConfig

DEFAULTS = {
    "seed": 0,
    "fit": {
        "restarts": 10,
        "max_iters": 2000,
        "tolerance": 1e-10,
        "seed": 0,
        "clamp_zero_sse": True,
    },
    "score": {
        "use_fisher": False,
        "hessian_step": 1e-4,
    },
    "sampler": {
        "n_temps": 4,
        "temp_ratio": 1.5,
        "steps": 600,
        "burn_in": 200,
        "thinning": 3,
        "swap_period": 10,
        "max_depth": 4,
        "basis": list(DEFAULT_BASIS),
        "p_leaf": 0.6,
        "p_var": 0.5,
        "move_probs": dict(DEFAULT_MOVE_PROBS),
        "init_expression": None,
    },
    "prior": {
        "samples": 20000,
        "samples_per_iter": 2000,
        "max_iterations": 200,
        "tol": 0.05,
        "eta0": 0.5,
        "tau": 20.0,
    },
    "experiment": {
        "ns": [10, 100, 1000],
        "sigmas": [0.05, 0.5, 5.0, 50.0],
    },
}


class ConfigError(ValueError):
    pass


def _merge(base, override, path=""):
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and key != "move_probs":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here} must be a mapping")
            _merge(base[key], value, here)
        else:
            base[key] = value
    return base


class RunConfig:
    """Validated merged configuration tree."""

    def __init__(self, overrides=None, seed=None):
        self.tree = copy.deepcopy(DEFAULTS)
        if overrides:
            _merge(self.tree, overrides)
        if seed is not None:
            self.tree["seed"] = int(seed)
            self.tree["fit"]["seed"] = int(seed)

    @classmethod
    def load(cls, path=None, seed=None):
        overrides = None
        if path is not None:
            with open(path) as fh:
                overrides = yaml.safe_load(fh) or {}
            if not isinstance(overrides, dict):
                raise ConfigError(f"config file {path} must hold a mapping")
        return cls(overrides, seed=seed)

    @property
    def seed(self):
        return int(self.tree["seed"])

    def fit_config(self, seed=None):
        f = self.tree["fit"]
        return FitConfig(
            restarts=int(f["restarts"]),
            max_iters=int(f["max_iters"]),
            tolerance=float(f["tolerance"]),
            seed=int(f["seed"] if seed is None else seed),
            clamp_zero_sse=bool(f["clamp_zero_sse"]),
        )

    def score_config(self, seed=None, clamp_zero_sse=None):
        s = self.tree["score"]
        fit = self.fit_config(seed=seed)
        if clamp_zero_sse is not None:
            from dataclasses import replace

            fit = replace(fit, clamp_zero_sse=clamp_zero_sse)
        return ScoreConfig(
            use_fisher=bool(s["use_fisher"]),
            hessian_step=float(s["hessian_step"]),
            fit=fit,
        )

    def sampler_config(self, seed=None):
        s = self.tree["sampler"]
        cfg = SamplerConfig(
            betas=geometric_ladder(int(s["n_temps"]), float(s["temp_ratio"])),
            steps=int(s["steps"]),
            burn_in=int(s["burn_in"]),
            thinning=int(s["thinning"]),
            swap_period=int(s["swap_period"]),
            move_probs=dict(s["move_probs"]),
            max_depth=int(s["max_depth"]),
            basis=tuple(s["basis"]),
            p_leaf=float(s["p_leaf"]),
            p_var=float(s["p_var"]),
            seed=int(self.tree["seed"] if seed is None else seed),
            init_expression=s["init_expression"],
        )
        cfg.validate()
        return cfg

    def prior_fit_config(self, seed=None):
        p = self.tree["prior"]
        return PriorFitConfig(
            samples=int(p["samples"]),
            samples_per_iter=int(p["samples_per_iter"]),
            max_iterations=int(p["max_iterations"]),
            tol=float(p["tol"]),
            eta0=float(p["eta0"]),
            tau=float(p["tau"]),
            seed=int(self.tree["seed"] if seed is None else seed),
        )

    def dump(self, path):
        """Echo the fully resolved config for provenance."""
        with open(path, "w") as fh:
            yaml.safe_dump(self.tree, fh, sort_keys=True)
