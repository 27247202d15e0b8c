"""Run configuration: a flat, human-readable JSON key-value file.

Every hyperparameter a run needs lives here. load_config starts from the
dataclass defaults, applies the file's keys, and rejects anything unknown;
save_config dumps all keys sorted, so save -> load round-trips exactly.
CLI overrides go through apply_overrides with the same validation.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class RunConfig:
    env: str = "cartpole"
    grid_size: int = 4              # minigrid only
    preset: str = "muzero"          # label recorded in outputs
    seed: int = 0

    total_steps: int = 25000
    games_per_cycle: int = 1
    batches_per_cycle: int = 20
    eval_interval: int = 250
    eval_episodes: int = 20
    checkpoint_interval: int = 5000

    buffer_capacity: int = 500
    batch_size: int = 128
    unroll_steps: int = 10
    n_steps: int = 50
    discount: float = 0.997

    hidden_size: int = 8
    support_size: int = 21

    num_simulations: int = 50
    c1: float = 1.25
    c2: float = 19652.0
    dirichlet_alpha: float = 0.25
    dirichlet_fraction: float = 0.25
    temperature: float = 1.0
    # optional stages of [from_step, temperature]; overrides `temperature`
    temperature_stages: list | None = None

    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay_rate: float = 0.9
    lr_decay_steps: int = 1000

    # stages of [from_step, alpha, beta, gamma_w, delta]
    weight_stages: list = field(default_factory=lambda: [[0, 1.0, 1.0, 0.0, 0.0]])

    solved_threshold: float | None = None
    solved_window_evals: int = 5
    stop_on_solved: bool = False

    def validate(self):
        if self.env not in ("cartpole", "tictactoe", "minigrid"):
            raise ValueError(f"unknown env {self.env!r}")
        for name in ("total_steps", "games_per_cycle", "batches_per_cycle",
                     "eval_interval", "eval_episodes", "buffer_capacity",
                     "batch_size", "unroll_steps", "n_steps", "hidden_size",
                     "num_simulations", "solved_window_evals", "lr_decay_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.support_size < 1 or self.support_size % 2 == 0:
            raise ValueError("support_size must be odd and >= 1")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must be in (0, 1]")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.temperature_stages is not None:
            if not self.temperature_stages:
                raise ValueError("temperature_stages may not be an empty list")
            starts = [s[0] for s in self.temperature_stages]
            if starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
                raise ValueError("temperature stages must start at 0 and "
                                 "strictly increase")
            for stage in self.temperature_stages:
                if len(stage) != 2 or stage[1] < 0:
                    raise ValueError("each temperature stage is "
                                     "[from_step, temperature >= 0]")
        if self.env == "minigrid" and self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        for stage in self.weight_stages:
            if len(stage) != 5:
                raise ValueError("each weight stage is [from_step, a, b, g, d]")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    """Light type normalization so JSON and CLI strings land on the
    dataclass types; wrong shapes fail in validate()."""
    if name == "weight_stages":
        if not isinstance(value, list):
            raise ValueError("weight_stages must be a list of stages")
        return [[int(s[0])] + [float(x) for x in s[1:]] for s in value]
    if name == "temperature_stages":
        if value is None:
            return None
        if not isinstance(value, list):
            raise ValueError("temperature_stages must be a list of stages")
        return [[int(s[0]), float(s[1])] for s in value]
    if name == "solved_threshold":
        return None if value is None else float(value)
    current = _FIELDS[name].type
    if current in ("int",):
        return int(value)
    if current in ("float",):
        return float(value)
    if current in ("bool",):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"bad boolean for {name}: {value!r}")
        return bool(value)
    return value


def config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig()
    for k, v in data.items():
        setattr(cfg, k, _coerce(k, v))
    return cfg.validate()


def load_config(path) -> RunConfig:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return config_from_dict(data)


def save_config(config: RunConfig, path):
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Apply {key: value} pairs (values may be strings from the CLI)."""
    for key, value in overrides.items():
        if key not in _FIELDS:
            raise ValueError(f"unknown config key: {key}")
        if isinstance(value, str) and key == "weight_stages":
            value = json.loads(value)
        if isinstance(value, str) and key == "temperature_stages":
            value = None if value.lower() == "none" else json.loads(value)
        if isinstance(value, str) and key == "solved_threshold":
            value = None if value.lower() == "none" else value
        setattr(config, key, _coerce(key, value))
    return config.validate()
