"""Experiment configuration: YAML with a fixed set of keys per section.

Unknown keys are errors, not warnings, so a typo can never silently fall
back to a default.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .optimizers import SvrgConfig

OPTIMIZER_CHOICES = ("adam-baseline", "svr-dqn", "both")

ENVIRONMENT_KEYS = {
    "gridworld": {"size", "goal", "pits", "slip_prob", "start", "episode_cap"},
    "chain": {"length", "noise", "start", "left_reward", "right_reward", "episode_cap"},
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "environment": {"name": "gridworld"},
    "network": {"hidden": [32], "activation": "relu"},
    "optimizer": {"kind": "both"},
    "svrg": {"B": 64, "b": 8, "m": 8, "eta": 0.3},
    "adam": {"alpha": 1e-3, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
    "rl": {"gamma": 0.99, "buffer_capacity": 10_000, "sync_period": 250, "learn_every": 4,
           "eps_start": 1.0, "eps_end": 0.1, "eps_anneal_fraction": 0.2,
           "target_rule": "double"},
    "run": {"frames": 20_000, "seeds": [0, 1, 2, 3, 4, 5], "eval_period": 500,
            "eval_episodes": 20, "eval_epsilon": 0.05, "output_dir": "runs/experiment",
            "checkpoint_period": 0, "persist_buffer": True, "variance_trials": 8,
            "wall_clock": False, "figures": True, "workers": 1},
    "sweep": {"problem": "quadratic", "n": 64, "dim": 5, "lam": 0.1, "points": 5,
              "trials": 10_000, "seed": 0, "outer_steps": 40, "alpha": 0.01, "start_distance": 2.0},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    environment: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["environment"]))
    network: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["network"]))
    optimizer: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["optimizer"]))
    svrg: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["svrg"]))
    adam: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["adam"]))
    rl: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["rl"]))
    run: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["run"]))
    sweep: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["sweep"]))

    @property
    def env_name(self) -> str:
        return self.environment["name"]

    @property
    def env_params(self) -> dict:
        return {k: v for k, v in self.environment.items() if k != "name"}

    @property
    def optimizer_kinds(self) -> list[str]:
        kind = self.optimizer["kind"]
        return ["adam-baseline", "svr-dqn"] if kind == "both" else [kind]

    def svrg_config(self) -> SvrgConfig:
        s = self.svrg
        return SvrgConfig(int(s["B"]), int(s["b"]), int(s["m"]), float(s["eta"]))

    def adam_params(self) -> dict:
        return {k: float(v) for k, v in self.adam.items()}

    def to_dict(self) -> dict:
        return {name: copy.deepcopy(getattr(self, name)) for name in DEFAULTS}

    def validate(self) -> "ExperimentConfig":
        env = self.environment
        if env["name"] not in ENVIRONMENT_KEYS:
            raise ConfigError(f"environment.name must be one of {sorted(ENVIRONMENT_KEYS)}")
        unknown = set(env) - {"name"} - ENVIRONMENT_KEYS[env["name"]]
        if unknown:
            raise ConfigError(f"unknown environment keys for {env['name']}: {sorted(unknown)}")
        if self.optimizer["kind"] not in OPTIMIZER_CHOICES:
            raise ConfigError(f"optimizer.kind must be one of {OPTIMIZER_CHOICES}")
        try:
            self.svrg_config()
        except ValueError as exc:
            raise ConfigError(f"svrg: {exc}") from None
        a = self.adam_params()
        if not (a["alpha"] > 0 and 0 <= a["beta1"] < 1 and 0 <= a["beta2"] < 1 and a["epsilon"] >= 0):
            raise ConfigError("adam: need alpha > 0, beta1/beta2 in [0, 1), epsilon >= 0")
        hidden = self.network["hidden"]
        if not isinstance(hidden, list) or any(int(h) < 1 for h in hidden):
            raise ConfigError("network.hidden must be a list of positive layer widths")
        if self.network["activation"] not in ("relu", "tanh"):
            raise ConfigError("network.activation must be relu or tanh")
        rl = self.rl
        if not 0 <= float(rl["gamma"]) < 1:
            raise ConfigError("rl.gamma must lie in [0, 1)")
        for key in ("buffer_capacity", "sync_period", "learn_every"):
            if int(rl[key]) < 1:
                raise ConfigError(f"rl.{key} must be positive")
        if int(rl["buffer_capacity"]) < self.svrg_config().B:
            raise ConfigError("rl.buffer_capacity must hold at least svrg.B transitions")
        if not 0 < float(rl["eps_anneal_fraction"]) <= 1:
            raise ConfigError("rl.eps_anneal_fraction must lie in (0, 1]")
        if rl["target_rule"] not in ("dqn", "double"):
            raise ConfigError("rl.target_rule must be dqn or double")
        run = self.run
        if int(run["frames"]) < 0:
            raise ConfigError("run.frames must be non-negative")
        for key in ("eval_period", "eval_episodes", "workers"):
            if int(run[key]) < 1:
                raise ConfigError(f"run.{key} must be positive")
        if int(run["checkpoint_period"]) < 0:
            raise ConfigError("run.checkpoint_period must be non-negative")
        if not isinstance(run["seeds"], list) or len(run["seeds"]) < 1:
            raise ConfigError("run.seeds must list at least one seed")
        if len(set(run["seeds"])) != len(run["seeds"]):
            raise ConfigError("run.seeds contains duplicates")
        if int(run["variance_trials"]) == 1 or int(run["variance_trials"]) < 0:
            raise ConfigError("run.variance_trials must be 0 (off) or at least 2")
        sw = self.sweep
        if sw["problem"] not in ("quadratic", "logistic"):
            raise ConfigError("sweep.problem must be quadratic or logistic")
        if int(sw["trials"]) < 2 or int(sw["points"]) < 1:
            raise ConfigError("sweep needs trials >= 2 and points >= 1")
        return self


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    unknown_sections = set(raw) - set(DEFAULTS)
    if unknown_sections:
        raise ConfigError(f"unknown config sections: {sorted(unknown_sections)}")
    cfg = ExperimentConfig()
    for section, values in raw.items():
        values = values or {}
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        target = getattr(cfg, section)
        if section == "environment":
            # environment keys depend on the environment name; checked in validate()
            target.update(values)
            continue
        unknown = set(values) - set(DEFAULTS[section])
        if unknown:
            raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
        target.update(values)
    return cfg.validate()


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
