"""DDPG learner: deterministic actor, Q critic, slow targets, replay, OU exploration."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .env import StepInfo, TandemEnv
from .nn import Adam, Mlp, MlpSpec, load_checkpoint, save_checkpoint, soft_update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    tau: float = 1e-2
    batch_size: int = 128
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hidden: tuple[int, ...] = (64, 64)
    buffer_capacity: int = 1_000_000
    warmup: int = 1000
    ou_theta: float = 0.15
    ou_mu: float = 0.0
    sigma_start: float = 0.5
    sigma_end: float = 0.005
    sigma_decay_fraction: float = 0.8
    obs_scaling: str = "log"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size cannot exceed buffer_capacity")
        if self.obs_scaling not in ("linear", "log"):
            raise ValueError("obs_scaling must be 'linear' or 'log'")

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class BufferError(RuntimeError):
    pass


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.act = np.zeros((self.capacity, act_dim))
        self.rew = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self.head = 0

    def __len__(self) -> int:
        return self.size

    def remember(self, obs, action, reward, next_obs, terminal) -> None:
        i = self.head
        self.obs[i] = obs
        self.act[i] = action
        self.rew[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = terminal
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def indices(self) -> np.ndarray:
        """Storage positions from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (self.head + np.arange(self.capacity)) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if batch_size > self.size:
            raise BufferError(f"cannot sample {batch_size} from {self.size} stored transitions")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return {
            "obs": self.obs[idx],
            "act": self.act[idx],
            "rew": self.rew[idx],
            "next_obs": self.next_obs[idx],
            "terminal": self.terminal[idx],
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        idx = self.indices()
        return {
            "obs": self.obs[idx], "act": self.act[idx], "rew": self.rew[idx],
            "next_obs": self.next_obs[idx], "terminal": self.terminal[idx],
        }

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        n = len(arrays["rew"])
        if n > self.capacity:
            raise BufferError("stored buffer larger than capacity")
        for key, dst in (("obs", self.obs), ("act", self.act), ("rew", self.rew),
                         ("next_obs", self.next_obs), ("terminal", self.terminal)):
            dst[:n] = arrays[key]
        self.size = n
        self.head = n % self.capacity


class OuNoise:
    """Discrete Ornstein-Uhlenbeck process with unit time step."""

    def __init__(self, dim: int, theta: float = 0.15, mu: float = 0.0, sigma: float = 0.5):
        self.dim = dim
        self.theta = theta
        self.mu = mu
        self.sigma = sigma
        self.x = np.full(dim, mu, dtype=np.float64)

    def reset(self) -> None:
        self.x = np.full(self.dim, self.mu, dtype=np.float64)

    def step(self, rng: np.random.Generator) -> np.ndarray:
        xi = rng.standard_normal(self.dim)
        self.x = self.x + self.theta * (self.mu - self.x) + self.sigma * xi
        return self.x


def sigma_schedule(step: int, total_steps: int, cfg: AgentConfig) -> float:
    """Linear decay from ``sigma_start`` to ``sigma_end`` over the first
    ``sigma_decay_fraction`` of training, flat afterwards."""
    horizon = cfg.sigma_decay_fraction * total_steps
    frac = 1.0 if horizon <= 0 else min(1.0, step / horizon)
    return cfg.sigma_start + (cfg.sigma_end - cfg.sigma_start) * frac


class DdpgAgent:
    def __init__(self, obs_dim: int, act_dim: int, q_max: int, config: AgentConfig = AgentConfig(),
                 seed=0):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.q_max = q_max
        self.config = config
        self.rng = np.random.Generator(np.random.PCG64(seed))
        h = config.hidden
        self.actor = Mlp.init(MlpSpec((obs_dim, *h, act_dim), "tanh"), self.rng)
        self.critic = Mlp.init(MlpSpec((obs_dim + act_dim, *h, 1), "linear"), self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.spec.n_params, config.actor_lr)
        self.critic_opt = Adam(self.critic.spec.n_params, config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, obs_dim, act_dim)
        self.noise = OuNoise(act_dim, config.ou_theta, config.ou_mu, config.sigma_start)
        self.total_steps = 0
        self.updates = 0

    def normalize(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if self.config.obs_scaling == "log":
            return np.log1p(obs) / math.log1p(self.q_max)
        return obs / self.q_max

    def act(self, obs, explore: bool = False) -> np.ndarray:
        a = self.actor(self.normalize(obs))
        if explore:
            a = a + self.noise.step(self.rng)
        return np.clip(a, -1.0, 1.0)

    def remember(self, obs, action, reward, next_obs, terminal) -> None:
        self.buffer.remember(self.normalize(obs), action, reward, self.normalize(next_obs), terminal)

    def critic_targets(self, batch) -> np.ndarray:
        """Bootstrapped targets; terminal transitions keep only the reward."""
        r = batch["rew"]
        live = ~batch["terminal"]
        y = r.astype(np.float64).copy()
        if live.any():
            s2 = batch["next_obs"][live]
            a2 = self.actor_target(s2)
            q2 = self.critic_target(np.hstack([s2, a2]))[:, 0]
            y[live] += self.config.gamma * q2
        return y

    def train_step(self, batch) -> tuple[float, float]:
        """One critic regression step, one actor ascent step, then target tracking."""
        cfg = self.config
        s, a = batch["obs"], batch["act"]
        n = len(s)
        y = self.critic_targets(batch)

        q, cache = self.critic.forward(np.hstack([s, a]))
        err = q[:, 0] - y
        critic_loss = float(np.mean(err * err))
        grad, _ = self.critic.backward(cache, (2.0 / n) * err[:, None])
        self.critic_opt.update(self.critic.params, grad)

        actor_objective = self.actor_step(s)

        soft_update(self.critic_target, self.critic, cfg.tau)
        soft_update(self.actor_target, self.actor, cfg.tau)
        self.updates += 1
        return critic_loss, actor_objective

    def critic_action_gradient(self, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Q(s, a) and dQ/da under the online critic."""
        q, cache = self.critic.forward(np.hstack([s, a]))
        _, g_in = self.critic.backward(cache, np.ones((len(s), 1)))
        return q[:, 0], g_in[:, self.obs_dim:]

    def actor_step(self, s: np.ndarray, critic: Callable | None = None) -> float:
        """One ascent step on the mean of Q(s, actor(s)).

        ``critic(s, a) -> (q, dq_da)`` defaults to the online critic.
        """
        critic = critic or self.critic_action_gradient
        mu, actor_cache = self.actor.forward(s)
        q, dq_da = critic(s, mu)
        grad, _ = self.actor.backward(actor_cache, dq_da / len(s))
        self.actor_opt.update(self.actor.params, grad, ascend=True)
        return float(np.mean(q))

    # -- persistence ------------------------------------------------------
    def _entries(self):
        return {
            "actor": (self.actor, self.actor_opt),
            "critic": (self.critic, self.critic_opt),
            "actor_target": (self.actor_target, None),
            "critic_target": (self.critic_target, None),
        }

    def save(self, directory, extra: dict | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_checkpoint(d / "agent.ckpt", self._entries())
        np.savez(d / "replay.npz", **self.buffer.state_arrays())
        state = {
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "q_max": self.q_max,
            "config": self.config.to_dict(),
            "total_steps": self.total_steps,
            "updates": self.updates,
            "noise_x": self.noise.x.tolist(),
            "noise_sigma": self.noise.sigma,
            "rng": self.rng.bit_generator.state,
            "extra": extra or {},
        }
        (d / "agent_state.json").write_text(json.dumps(state, indent=1))

    @classmethod
    def load(cls, directory, with_replay: bool = True) -> tuple["DdpgAgent", dict]:
        d = Path(directory)
        state = json.loads((d / "agent_state.json").read_text())
        agent = cls(state["obs_dim"], state["act_dim"], state["q_max"],
                    AgentConfig.from_dict(state["config"]))
        load_checkpoint(d / "agent.ckpt", agent._entries())
        if with_replay and (d / "replay.npz").exists():
            with np.load(d / "replay.npz") as z:
                agent.buffer.load_arrays({k: z[k] for k in z.files})
        agent.total_steps = state["total_steps"]
        agent.updates = state["updates"]
        agent.noise.x = np.asarray(state["noise_x"], dtype=np.float64)
        agent.noise.sigma = state["noise_sigma"]
        agent.rng.bit_generator.state = state["rng"]
        return agent, state["extra"]


@dataclass
class EpisodeStats:
    episode: int
    steps: int
    sim_time: float
    n_departed: int
    n_violations: int
    mean_sum_rate: float
    mean_reward: float
    terminated: bool
    sigma: float
    critic_loss: float

    @property
    def violation_prob(self) -> float:
        return self.n_violations / self.n_departed if self.n_departed else math.nan


@dataclass
class LearningCurve:
    episodes: list[EpisodeStats] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.episodes)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.episodes], dtype=np.float64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(EPISODE_COLUMNS)
            for e in self.episodes:
                w.writerow([_cell(getattr(e, c)) for c in EPISODE_COLUMNS])

    @classmethod
    def from_csv(cls, path) -> "LearningCurve":
        names = [f.name for f in fields(EpisodeStats)]
        curve = cls()
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                kw = {}
                for name in names:
                    v = row[name]
                    if name == "terminated":
                        kw[name] = v == "1"
                    elif name in ("episode", "steps", "n_departed", "n_violations"):
                        kw[name] = int(v)
                    else:
                        kw[name] = float(v) if v != "" else math.nan
                curve.episodes.append(EpisodeStats(**kw))
        return curve


EPISODE_COLUMNS = ("episode", "steps", "sim_time", "n_departed", "n_violations", "violation_prob",
                   "mean_sum_rate", "mean_reward", "terminated", "sigma", "critic_loss")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if math.isnan(v) else f"{float(v):.9g}"


def train_loop(
    env: TandemEnv,
    agent: DdpgAgent,
    episodes: int,
    total_episodes: int | None = None,
    start_episode: int = 0,
    learn: bool = True,
    explore: bool = True,
    on_episode: Callable[[EpisodeStats], None] | None = None,
) -> LearningCurve:
    """Run ``episodes`` training episodes starting at index ``start_episode``.

    ``total_episodes`` fixes the horizon of the exploration-noise schedule,
    so a resumed run continues the same schedule.
    """
    cfg = agent.config
    total_steps = (total_episodes or start_episode + episodes) * env.max_steps
    d_ub = env.qos.d_ub
    curve = LearningCurve()
    for ep in range(start_episode, start_episode + episodes):
        obs = env.reset(episode_index=ep)
        agent.noise.reset()
        n_dep = n_viol = 0
        rate_sum = reward_sum = loss_sum = 0.0
        n_loss = 0
        info: StepInfo | None = None
        done = False
        while not done:
            agent.noise.sigma = sigma_schedule(agent.total_steps, total_steps, cfg)
            action = agent.act(obs, explore=explore)
            next_obs, reward, done, info = env.step(action)
            agent.remember(obs, action, reward, next_obs, info.terminal)
            agent.total_steps += 1
            if learn and len(agent.buffer) >= max(cfg.warmup, cfg.batch_size):
                closs, _ = agent.train_step(agent.buffer.sample(cfg.batch_size, agent.rng))
                loss_sum += closs
                n_loss += 1
            delays = info.outcome.departures.delay
            n_dep += len(delays)
            n_viol += int(np.count_nonzero(delays > d_ub))
            rate_sum += info.outcome.sum_rate
            reward_sum += reward
            obs = next_obs
        stats = EpisodeStats(
            episode=ep,
            steps=env.steps,
            sim_time=env.sim.clock,
            n_departed=n_dep,
            n_violations=n_viol,
            mean_sum_rate=rate_sum / env.steps,
            mean_reward=reward_sum / env.steps,
            terminated=info.terminal,
            sigma=agent.noise.sigma,
            critic_loss=loss_sum / n_loss if n_loss else math.nan,
        )
        curve.episodes.append(stats)
        if on_episode is not None:
            on_episode(stats)
        log.debug("episode %d: steps=%d viol=%.4f rate=%.3f reward=%.3f", ep, stats.steps,
                  stats.violation_prob, stats.mean_sum_rate, stats.mean_reward)
    return curve
