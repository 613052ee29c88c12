"""Training and evaluation runs built from a :class:`RunConfig`."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .agent import DdpgAgent, EpisodeStats, LearningCurve, train_loop
from .config import RunConfig
from .distributions import derive_seed
from .env import AGENT_STREAM, EVAL_STREAM, TRAIN_STREAM, QosSpec, TandemEnv, compute_reward, scale_action
from .metrics import RunSummary, WindowStats
from .sim import NetworkConfig, TandemSim


def _int_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, np.uint64)[0])


def run_seed(master: int, run_index: int) -> int:
    """Seed of training run ``run_index`` under the master seed."""
    return _int_seed(derive_seed(master, TRAIN_STREAM, run_index))


def eval_seed(master: int, k: int) -> np.random.SeedSequence:
    """Seed of evaluation sample path ``k``; identical for every policy under test."""
    return derive_seed(master, EVAL_STREAM, k)


def make_env(cfg: RunConfig, run_index: int, qos: QosSpec | None = None) -> TandemEnv:
    return TandemEnv(cfg.network, qos or cfg.qos, cfg.episode, q_max=cfg.q_max,
                     seed=run_seed(cfg.seed, run_index), backend=cfg.backend)


def make_agent(cfg: RunConfig, run_index: int) -> DdpgAgent:
    n = cfg.network.n_stages
    seed = derive_seed(run_seed(cfg.seed, run_index), AGENT_STREAM)
    return DdpgAgent(n, n, cfg.q_max, cfg.agent, seed=seed)


def train_one(
    cfg: RunConfig,
    run_index: int,
    episodes: int | None = None,
    on_episode: Callable[[EpisodeStats], None] | None = None,
) -> tuple[DdpgAgent, LearningCurve]:
    episodes = cfg.training.episodes if episodes is None else episodes
    env = make_env(cfg, run_index)
    agent = make_agent(cfg, run_index)
    curve = train_loop(env, agent, episodes, on_episode=on_episode)
    return agent, curve


# -- policies -----------------------------------------------------------------

class AgentPolicy:
    """Greedy (noise-free) actor of a trained agent."""

    def __init__(self, agent: DdpgAgent):
        self.agent = agent

    def __call__(self, obs) -> np.ndarray:
        return self.agent.act(obs, explore=False)


class StaticPolicy:
    """Always the same rates, whatever the state."""

    def __init__(self, rates: Sequence[float], network: NetworkConfig):
        lo = np.asarray(network.mu_min)
        hi = np.asarray(network.mu_max)
        self.raw = np.clip(2.0 * (np.asarray(rates, dtype=np.float64) - lo) / (hi - lo) - 1.0, -1, 1)

    def __call__(self, obs) -> np.ndarray:
        return self.raw


@dataclass
class Evaluation:
    windows: list[WindowStats]
    summaries: list[RunSummary]
    pooled: RunSummary


def evaluate_policy(
    network: NetworkConfig,
    qos: QosSpec,
    policy: Callable[[np.ndarray], np.ndarray],
    horizon: float,
    seed,
    q_max: int = 1024,
    window_len: float = 1000.0,
    backend: str | None = None,
) -> WindowStats:
    """Run ``policy`` on one long, never-reset sample path starting empty."""
    sim = TandemSim(network, seed, backend=backend)
    stats = WindowStats(qos.d_ub, window_len)
    n_slots = int(math.ceil(horizon / qos.slot_len - 1e-9))
    for _ in range(n_slots):
        obs = np.minimum(np.asarray(sim.queue_lengths(), dtype=np.int64), q_max)
        action = scale_action(policy(obs), network)
        out = sim.run_slot(action.rates, qos.slot_len, qos.d_ub)
        stats.ingest_slot(out, compute_reward(out, qos))
    return stats


def pool(windows: Sequence[WindowStats]) -> RunSummary:
    """One summary over several sample paths, windows treated as batches."""
    merged = WindowStats(windows[0].d_ub, windows[0].window_len)
    for w in windows:
        k = w.complete_windows()
        merged.n_completed += w.n_completed[:k]
        merged.n_violations += w.n_violations[:k]
        merged._rate_time += w._rate_time[:k]
        merged._reward_time += w._reward_time[:k]
        merged._covered += w._covered[:k]
        merged.n_arrivals += w.n_arrivals
        merged.n_slots += w.n_slots
        merged._rate_sum += w._rate_sum
        merged._reward_sum += w._reward_sum
    merged.last_time = merged.n_windows * merged.window_len
    return merged.summary()


def evaluate(cfg: RunConfig, policy, qos: QosSpec | None = None, n_seeds: int | None = None,
             horizon: float | None = None) -> Evaluation:
    """Evaluate on the configured evaluation sample paths (paired across policies)."""
    qos = qos or cfg.qos
    ev = cfg.evaluation
    windows = [
        evaluate_policy(cfg.network, qos, policy, horizon or ev.horizon, eval_seed(cfg.seed, k),
                        cfg.q_max, ev.window_len, cfg.backend)
        for k in range(n_seeds or ev.n_seeds)
    ]
    return Evaluation(windows, [w.summary() for w in windows], pool(windows))
