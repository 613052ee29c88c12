"""Run configuration: defaults, JSON file, command-line overrides.

Precedence is flags > file > defaults. Defaults reproduce the three-stage
experiment: c = [3, 5, 2], Gamma traffic with rate 0.95 and SCVs 0.7
(inter-arrival) / 0.8 (service), d_ub = 10, eps_ub = 0.1, T = 30,
lambda = 14.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .agent import AgentConfig
from .env import EpisodeConfig, QosSpec
from .sim import ConfigError, NetworkConfig

ARRIVAL_RATE = 0.95

DEFAULTS: dict = {
    "seed": 0,
    "backend": None,
    "q_max": 1024,
    "network": {
        "servers": [3, 5, 2],
        "arrival": {"family": "gamma", "mean": 1.0 / ARRIVAL_RATE, "scv": 0.7},
        "service_work": [{"family": "gamma", "mean": 1.0, "scv": 0.8}] * 3,
        "mu_min": [0.34, 0.2, 0.5],
        "mu_max": [1.5, 1.5, 1.5],
    },
    "qos": {"d_ub": 10.0, "eps_ub": 0.1, "lambda_tradeoff": 14.0, "slot_len": 30.0},
    "episode": {"episode_duration": 2000.0, "delay_max": None},
    "agent": AgentConfig().to_dict(),
    "training": {"episodes": 300, "seeds": [0, 1, 2, 3], "checkpoint_every": 0},
    "evaluation": {"n_seeds": 5, "horizon": 22000.0, "window_len": 1000.0},
    "sweep": {"lambdas": [8.0, 10.0, 12.0, 14.0, 16.0], "slot_lens": [15.0, 30.0, 100.0],
              "seeds": [0, 1, 2, 3]},
    "out_dir": "runs/default",
    "checkpoint": None,
}


def deep_update(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_update(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int
    seeds: tuple[int, ...]
    checkpoint_every: int = 0


@dataclass(frozen=True)
class EvalConfig:
    n_seeds: int
    horizon: float
    window_len: float


@dataclass(frozen=True)
class SweepConfig:
    lambdas: tuple[float, ...]
    slot_lens: tuple[float, ...]
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class RunConfig:
    seed: int
    backend: str | None
    q_max: int
    network: NetworkConfig
    qos: QosSpec
    episode: EpisodeConfig
    agent: AgentConfig
    training: TrainingConfig
    evaluation: EvalConfig
    sweep: SweepConfig
    out_dir: str
    checkpoint: str | None
    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = deep_update(DEFAULTS, d)
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            network = NetworkConfig.from_dict(d["network"])
            qos = QosSpec(arrival_rate=network.arrival_rate, **d["qos"])
            tr = d["training"]
            ev = d["evaluation"]
            sw = d["sweep"]
            cfg = cls(
                seed=int(d["seed"]),
                backend=d["backend"],
                q_max=int(d["q_max"]),
                network=network,
                qos=qos,
                episode=EpisodeConfig(**d["episode"]),
                agent=AgentConfig.from_dict(d["agent"]),
                training=TrainingConfig(int(tr["episodes"]), tuple(int(s) for s in tr["seeds"]),
                                        int(tr.get("checkpoint_every", 0))),
                evaluation=EvalConfig(int(ev["n_seeds"]), float(ev["horizon"]), float(ev["window_len"])),
                sweep=SweepConfig(tuple(float(x) for x in sw["lambdas"]),
                                  tuple(float(x) for x in sw["slot_lens"]),
                                  tuple(int(s) for s in sw["seeds"])),
                out_dir=str(d["out_dir"]),
                checkpoint=d["checkpoint"],
                raw=d,
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {e}") from e
        cfg.episode.resolve_delay_max(qos.d_ub)
        if cfg.training.episodes < 0:
            raise ConfigError("training.episodes must be >= 0")
        if cfg.q_max < 1:
            raise ConfigError("q_max must be >= 1")
        return cfg

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        d: dict = {}
        if path is not None:
            try:
                d = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(deep_update(d, overrides or {}))

    def replace(self, **overrides) -> "RunConfig":
        """New config with nested overrides, e.g. ``replace(qos={"slot_len": 15})``."""
        return RunConfig.from_dict(deep_update(self.raw, overrides))

    def resolved(self) -> dict:
        """Fully resolved settings, for writing next to every run."""
        d = copy.deepcopy(self.raw)
        d["network"] = self.network.to_dict()
        d["episode"]["delay_max"] = self.episode.resolve_delay_max(self.qos.d_ub)
        d["derived"] = {
            "arrival_rate": self.qos.arrival_rate,
            "beta1": self.qos.beta1,
            "beta2": self.qos.beta2,
            "expected_arrivals_per_slot": self.qos.expected_arrivals,
            "max_steps": self.episode.max_steps(self.qos.slot_len),
        }
        return d

    def write_resolved(self, path) -> None:
        Path(path).write_text(json.dumps(self.resolved(), indent=2, sort_keys=True) + "\n")
