"""Tandem network of multi-server FCFS queues with slot-wise service rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from ..distributions import DistSpec, RngStream, VariateStream
from . import _backend

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    """Topology, traffic and action range of the tandem network.

    ``service_work`` holds the per-stage work laws; a job with work ``w``
    served at rate ``mu`` needs ``w / mu`` time units.
    """

    servers: tuple[int, ...]
    arrival: DistSpec
    service_work: tuple[DistSpec, ...]
    mu_min: tuple[float, ...]
    mu_max: tuple[float, ...]

    def __post_init__(self):
        for name in ("servers", "service_work", "mu_min", "mu_max"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        n = len(self.servers)
        if n == 0:
            raise ConfigError("network needs at least one stage")
        if not (len(self.service_work) == len(self.mu_min) == len(self.mu_max) == n):
            raise ConfigError("servers, service_work, mu_min and mu_max must have equal length")
        if any(int(c) != c or c < 1 for c in self.servers):
            raise ConfigError(f"server counts must be positive integers: {self.servers}")
        for i, (lo, hi) in enumerate(zip(self.mu_min, self.mu_max)):
            if not 0 < lo < hi:
                raise ConfigError(f"stage {i}: need 0 < mu_min < mu_max, got {lo}, {hi}")
        for i, rho in enumerate(self.max_utilization):
            if rho >= 1:
                raise ConfigError(
                    f"stage {i} is unstable at mu_min (utilization {rho:.3f} >= 1)"
                )

    @property
    def n_stages(self) -> int:
        return len(self.servers)

    @property
    def arrival_rate(self) -> float:
        return 1.0 / self.arrival.mean

    @property
    def max_utilization(self) -> list[float]:
        """Per-stage utilization at the slowest admissible rate."""
        lam = self.arrival_rate
        return [
            lam * w.mean / (c * lo)
            for c, w, lo in zip(self.servers, self.service_work, self.mu_min)
        ]

    def sum_rate(self, rates: Sequence[float]) -> float:
        return float(sum(c * r for c, r in zip(self.servers, rates)))

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            servers=tuple(int(c) for c in d["servers"]),
            arrival=DistSpec.from_dict(d["arrival"]),
            service_work=tuple(DistSpec.from_dict(w) for w in d["service_work"]),
            mu_min=tuple(float(x) for x in d["mu_min"]),
            mu_max=tuple(float(x) for x in d["mu_max"]),
        )

    def to_dict(self) -> dict:
        return {
            "servers": list(self.servers),
            "arrival": self.arrival.to_dict(),
            "service_work": [w.to_dict() for w in self.service_work],
            "mu_min": list(self.mu_min),
            "mu_max": list(self.mu_max),
        }


@dataclass
class JobRecord:
    job_id: int
    arrival_time: float
    per_stage_start: list[float]
    per_stage_departure: list[float]
    per_stage_work: list[float] = field(default_factory=list)
    network_departure_time: float | None = None
    censored: bool = False

    @property
    def end_to_end_delay(self) -> float | None:
        if self.network_departure_time is None:
            return None
        return self.network_departure_time - self.arrival_time


class Departures:
    """Jobs that left the network, stored column-wise."""

    def __init__(self, job_id, arrival, start, departure, work):
        self.job_id = job_id
        self.arrival = arrival
        self.start = start
        self.departure = departure
        self.work = work

    @classmethod
    def empty(cls, n_stages: int) -> "Departures":
        z = np.empty((0, n_stages))
        return cls(np.empty(0, dtype=np.int64), np.empty(0), z, z.copy(), z.copy())

    @property
    def network_departure(self) -> np.ndarray:
        return self.departure[:, -1]

    @property
    def delay(self) -> np.ndarray:
        return self.departure[:, -1] - self.arrival

    def __len__(self) -> int:
        return len(self.job_id)

    def __getitem__(self, mask) -> "Departures":
        return Departures(
            self.job_id[mask], self.arrival[mask], self.start[mask],
            self.departure[mask], self.work[mask],
        )

    def __iter__(self) -> Iterator[JobRecord]:
        for i in range(len(self)):
            yield JobRecord(
                job_id=int(self.job_id[i]),
                arrival_time=float(self.arrival[i]),
                per_stage_start=self.start[i].tolist(),
                per_stage_departure=self.departure[i].tolist(),
                per_stage_work=self.work[i].tolist(),
                network_departure_time=float(self.departure[i, -1]),
            )

    @staticmethod
    def concat(parts: Sequence["Departures"]) -> "Departures":
        return Departures(
            np.concatenate([p.job_id for p in parts]),
            np.concatenate([p.arrival for p in parts]),
            np.concatenate([p.start for p in parts]),
            np.concatenate([p.departure for p in parts]),
            np.concatenate([p.work for p in parts]),
        )


@dataclass
class SlotOutcome:
    """What happened during one control slot ``(t_start, t_end]``.

    ``accounted`` holds the slot's accountable arrivals that already left;
    ``censored_*`` describe accountable arrivals still inside at ``t_end``
    (their delay is known to exceed ``d_ub``).
    Late arrivals (last ``d_ub`` of the slot) that are still inside are
    left out entirely.
    """

    t_start: float
    t_end: float
    rates: list[float]
    sum_rate: float
    n_arrivals_in_window: int
    accounted: Departures
    censored_ids: np.ndarray
    censored_arrivals: np.ndarray
    departures: Departures
    end_queue_lengths: list[int]
    max_age_in_system: float

    @property
    def window(self) -> tuple[float, float]:
        return self.t_start, self.t_end

    @property
    def n_censored(self) -> int:
        return len(self.censored_ids)

    @property
    def accounted_delays(self) -> np.ndarray:
        return self.accounted.delay

    @property
    def completed_jobs(self) -> list[JobRecord]:
        jobs = list(self.accounted)
        for j, a in zip(self.censored_ids, self.censored_arrivals):
            jobs.append(JobRecord(int(j), float(a), [], [], censored=True))
        return jobs


class TandemSim:
    """Simulation state plus the operations that advance it.

    ``backend`` picks the event-loop kernel: ``"cython"``, ``"python"`` or
    ``None`` for the default chosen at import time.
    """

    def __init__(self, config: NetworkConfig, seed, backend: str | None = None):
        self.config = config
        root = RngStream(seed)
        arrival_rng, *work_rngs = root.spawn(1 + config.n_stages)
        kernel_cls = _backend.get_kernel(backend)
        self.kernel = kernel_cls(
            list(config.servers),
            VariateStream(config.arrival, arrival_rng),
            [VariateStream(w, r) for w, r in zip(config.service_work, work_rngs)],
            list(config.mu_max),
        )
        self.clamp_warnings = 0

    @property
    def backend(self) -> str:
        return self.kernel.backend

    @property
    def clock(self) -> float:
        return self.kernel.clock

    @property
    def rates(self) -> list[float]:
        return list(self.kernel.rates)

    @property
    def n_arrivals(self) -> int:
        return self.kernel.n_arrivals

    @property
    def n_departures(self) -> int:
        return self.kernel.n_departures

    def queue_lengths(self) -> list[int]:
        """Jobs at each stage, waiting or in service."""
        return self.kernel.stage_counts()

    def in_system(self) -> int:
        return sum(self.kernel.stage_counts())

    def set_rates(self, rates: Sequence[float]) -> int:
        """Apply new per-stage rates; returns how many completions were re-keyed."""
        cfg = self.config
        if len(rates) != cfg.n_stages:
            raise ValueError(f"expected {cfg.n_stages} rates, got {len(rates)}")
        clean = []
        for i, r in enumerate(rates):
            r = float(r)
            lo, hi = cfg.mu_min[i], cfg.mu_max[i]
            if not lo <= r <= hi:
                self.clamp_warnings += 1
                log.warning("stage %d rate %g outside [%g, %g]; clamped", i, r, lo, hi)
                r = min(max(r, lo), hi)
            clean.append(r)
        return self.kernel.set_rates(clean)

    def run_until(self, t_end: float) -> Departures:
        if t_end < self.clock:
            raise ValueError(f"cannot run backwards: t_end={t_end} < clock={self.clock}")
        return Departures(*self.kernel.run_until(float(t_end)))

    def run_slot(self, rates: Sequence[float], slot_len: float, d_ub: float) -> SlotOutcome:
        if not slot_len > d_ub:
            raise ConfigError(f"slot length {slot_len} must exceed the delay bound {d_ub}")
        t0 = self.clock
        t1 = t0 + slot_len
        arrivals_before = self.kernel.n_arrivals
        self.set_rates(rates)
        deps = self.run_until(t1)

        in_window = deps.arrival > t0
        ids, arr = self.kernel.in_system()
        late_cut = t1 - d_ub
        censored = (arr > t0) & (arr < late_cut)
        age = float(t1 - arr.min()) if len(arr) else 0.0
        cur = self.rates
        return SlotOutcome(
            t_start=t0,
            t_end=t1,
            rates=cur,
            sum_rate=self.config.sum_rate(cur),
            n_arrivals_in_window=self.kernel.n_arrivals - arrivals_before,
            accounted=deps[in_window],
            censored_ids=ids[censored],
            censored_arrivals=arr[censored],
            departures=deps,
            end_queue_lengths=self.queue_lengths(),
            max_age_in_system=age,
        )

    def check_invariants(self) -> None:
        """Raise AssertionError if conservation or server bookkeeping is broken."""
        k = self.kernel
        counts = k.stage_counts()
        waiting = k.waiting_counts()
        busy = k.busy_counts()
        assert k.n_arrivals == k.n_departures + sum(counts), "job conservation"
        for s, c in enumerate(self.config.servers):
            assert counts[s] >= 0 and waiting[s] >= 0
            assert busy[s] <= c, f"stage {s}: {busy[s]} busy > {c} servers"
            assert counts[s] == busy[s] + waiting[s], f"stage {s}: count mismatch"
            if waiting[s] > 0:
                assert busy[s] == c, f"stage {s}: idle server with non-empty line"
