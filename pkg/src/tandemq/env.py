"""Slotted decision process around the tandem simulator."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import derive_seed
from .sim import ConfigError, NetworkConfig, SlotOutcome, TandemSim

# spawn-key tags keeping seed families apart
TRAIN_STREAM = 0
EVAL_STREAM = 1
AGENT_STREAM = 2


@dataclass(frozen=True)
class QosSpec:
    d_ub: float = 10.0
    eps_ub: float = 0.1
    lambda_tradeoff: float = 14.0
    slot_len: float = 30.0
    arrival_rate: float = 0.95

    def __post_init__(self):
        if not 0 < self.eps_ub < 1:
            raise ConfigError(f"eps_ub must lie in (0, 1), got {self.eps_ub}")
        if not self.slot_len > self.d_ub:
            raise ConfigError(f"slot_len {self.slot_len} must exceed d_ub {self.d_ub}")
        if self.lambda_tradeoff < 0:
            raise ConfigError("lambda_tradeoff must be non-negative")

    @property
    def beta1(self) -> float:
        return self.eps_ub * self.lambda_tradeoff

    @property
    def beta2(self) -> float:
        return -(1.0 - self.eps_ub) * self.lambda_tradeoff

    @property
    def expected_arrivals(self) -> float:
        return self.arrival_rate * self.slot_len


@dataclass(frozen=True)
class EpisodeConfig:
    episode_duration: float = 2000.0
    delay_max: float | None = None  # None: ten times d_ub

    def resolve_delay_max(self, d_ub: float) -> float:
        dm = 10.0 * d_ub if self.delay_max is None else self.delay_max
        if not dm > d_ub:
            raise ConfigError(f"delay_max {dm} must exceed d_ub {d_ub}")
        return dm

    def max_steps(self, slot_len: float) -> int:
        n = int(math.floor(self.episode_duration / slot_len + 1e-9))
        if n < 1:
            raise ConfigError("episode shorter than one slot")
        return n


@dataclass
class RateAction:
    raw: np.ndarray
    rates: np.ndarray


def scale_action(raw: Sequence[float], config: NetworkConfig) -> RateAction:
    """Map network outputs in [-1, 1] affinely onto [mu_min, mu_max]."""
    raw = np.clip(np.asarray(raw, dtype=np.float64), -1.0, 1.0)
    lo = np.asarray(config.mu_min)
    hi = np.asarray(config.mu_max)
    rates = lo + (raw + 1.0) / 2.0 * (hi - lo)
    # exact endpoints despite rounding
    rates = np.where(raw == -1.0, lo, np.where(raw == 1.0, hi, rates))
    return RateAction(raw=raw, rates=rates)


def compute_reward(outcome: SlotOutcome, qos: QosSpec, expected_arrivals: float | None = None) -> float:
    """Per-slot reward: mean sub-reward per expected arrival minus the sum-rate.

    Accountable jobs with delay below ``d_ub`` earn ``beta1``; the rest,
    censored ones included, earn ``beta2``.
    """
    na = qos.expected_arrivals if expected_arrivals is None else expected_arrivals
    d = outcome.accounted_delays
    n_ok = int(np.count_nonzero(d < qos.d_ub))
    n_bad = len(d) - n_ok + outcome.n_censored
    # correctly rounded, so the result does not depend on summation order
    total = math.fsum(itertools.chain(itertools.repeat(qos.beta1, n_ok), itertools.repeat(qos.beta2, n_bad)))
    return total / na - outcome.sum_rate


class LifecycleError(RuntimeError):
    pass


@dataclass
class StepInfo:
    outcome: SlotOutcome
    terminal: bool
    truncated: bool
    n_accounted: int
    n_violations: int
    step: int

    @property
    def sum_rate(self) -> float:
        return self.outcome.sum_rate


class TandemEnv:
    """Episodic environment: observe truncated queue lengths, pick rates, get reward.

    Each ``reset`` starts an empty network on a fresh sub-seed derived from
    ``(seed, stream, episode index)``. ``stream`` separates training and
    evaluation randomness.
    """

    def __init__(
        self,
        network: NetworkConfig,
        qos: QosSpec,
        episode: EpisodeConfig = EpisodeConfig(),
        q_max: int = 1024,
        seed: int = 0,
        stream: int = TRAIN_STREAM,
        backend: str | None = None,
        arrivals_estimator: str = "analytic",
    ):
        if arrivals_estimator not in ("analytic", "running"):
            raise ConfigError(f"unknown arrivals estimator {arrivals_estimator!r}")
        self.network = network
        self.qos = qos
        self.episode = episode
        self.q_max = int(q_max)
        self.seed = seed
        self.stream = stream
        self.backend = backend
        self.arrivals_estimator = arrivals_estimator
        self.delay_max = episode.resolve_delay_max(qos.d_ub)
        self.max_steps = episode.max_steps(qos.slot_len)
        self.episode_index = -1
        self.sim: TandemSim | None = None
        self.steps = 0
        self.done = True
        self._arrivals_seen = 0
        self._slots_seen = 0

    @property
    def n_stages(self) -> int:
        return self.network.n_stages

    def observe(self) -> np.ndarray:
        q = np.asarray(self.sim.queue_lengths(), dtype=np.int64)
        return np.minimum(q, self.q_max)

    def reset(self, episode_index: int | None = None) -> np.ndarray:
        self.episode_index = self.episode_index + 1 if episode_index is None else episode_index
        sub = derive_seed(self.seed, self.stream, self.episode_index)
        self.sim = TandemSim(self.network, sub, backend=self.backend)
        self.steps = 0
        self.done = False
        return self.observe()

    def expected_arrivals(self) -> float:
        if self.arrivals_estimator == "running" and self._slots_seen:
            return max(self._arrivals_seen / self._slots_seen, 1e-12)
        return self.qos.expected_arrivals

    def step(self, action) -> tuple[np.ndarray, float, bool, StepInfo]:
        if self.done or self.sim is None:
            raise LifecycleError("step() called on a finished episode; call reset() first")
        if not isinstance(action, RateAction):
            action = scale_action(action, self.network)
        qos = self.qos
        out = self.sim.run_slot(action.rates, qos.slot_len, qos.d_ub)
        reward = compute_reward(out, qos, self.expected_arrivals())
        self._arrivals_seen += out.n_arrivals_in_window
        self._slots_seen += 1
        self.steps += 1

        delays = out.departures.delay
        terminal = bool(
            (len(delays) and delays.max() > self.delay_max) or out.max_age_in_system > self.delay_max
        )
        truncated = not terminal and self.steps >= self.max_steps
        self.done = terminal or truncated
        d = out.accounted_delays
        n_ok = int(np.count_nonzero(d < qos.d_ub))
        info = StepInfo(
            outcome=out,
            terminal=terminal,
            truncated=truncated,
            n_accounted=len(d) + out.n_censored,
            n_violations=len(d) - n_ok + out.n_censored,
            step=self.steps,
        )
        return self.observe(), reward, self.done, info
