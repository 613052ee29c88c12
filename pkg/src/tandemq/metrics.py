"""Windowed QoS statistics, cross-seed aggregation and CSV export."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sim import SlotOutcome

log = logging.getLogger(__name__)

Z95 = 1.959963984540054
CSV_COLUMNS = ("index", "time", "violation_prob", "violation_se", "sum_rate", "sum_rate_se",
               "reward", "reward_se")


class OrderError(ValueError):
    pass


class WindowStats:
    """Per-window counters over contiguous windows ``((k-1)L, kL]``.

    Completed jobs are attributed to the window holding their departure
    time; slot-level quantities (sum-rate, reward) are split across windows
    in proportion to time overlap.
    """

    def __init__(self, d_ub: float, window_len: float = 1000.0):
        self.d_ub = d_ub
        self.window_len = window_len
        self.n_completed: list[int] = []
        self.n_violations: list[int] = []
        self._rate_time: list[float] = []
        self._reward_time: list[float] = []
        self._covered: list[float] = []
        self.last_time = 0.0
        self.n_slots = 0
        self.n_arrivals = 0
        self._reward_sum = 0.0
        self._rate_sum = 0.0

    def _window(self, t: float) -> int:
        return max(int(math.ceil(t / self.window_len)) - 1, 0)

    def _grow(self, k: int) -> None:
        while len(self.n_completed) <= k:
            self.n_completed.append(0)
            self.n_violations.append(0)
            self._rate_time.append(0.0)
            self._reward_time.append(0.0)
            self._covered.append(0.0)

    def ingest_slot(self, outcome: SlotOutcome, reward: float = math.nan) -> None:
        t0, t1 = outcome.t_start, outcome.t_end
        if t0 < self.last_time - 1e-9:
            raise OrderError(f"slot starting at {t0} arrived after time {self.last_time}")
        self.last_time = t1
        self.n_slots += 1
        self.n_arrivals += outcome.n_arrivals_in_window
        self._rate_sum += outcome.sum_rate
        self._reward_sum += reward

        self._grow(self._window(t1))
        L = self.window_len
        k = self._window(t0) if t0 > 0 else 0
        while k * L < t1:
            lo, hi = max(t0, k * L), min(t1, (k + 1) * L)
            if hi > lo:
                self._covered[k] += hi - lo
                self._rate_time[k] += (hi - lo) * outcome.sum_rate
                self._reward_time[k] += (hi - lo) * reward
            k += 1

        dep = outcome.departures
        if len(dep):
            wins = np.maximum(np.ceil(dep.network_departure / L).astype(np.int64) - 1, 0)
            viol = dep.delay > self.d_ub
            counts = np.bincount(wins, minlength=len(self.n_completed))
            vcounts = np.bincount(wins, weights=viol, minlength=len(self.n_completed))
            for w in np.flatnonzero(counts):
                self.n_completed[w] += int(counts[w])
                self.n_violations[w] += int(vcounts[w])

    # -- per-window series ------------------------------------------------
    @property
    def n_windows(self) -> int:
        return len(self.n_completed)

    def complete_windows(self) -> int:
        """Windows fully covered by ingested slots."""
        return int(self.last_time // self.window_len)

    def violation_prob(self) -> np.ndarray:
        n = np.asarray(self.n_completed, dtype=np.float64)
        v = np.asarray(self.n_violations, dtype=np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, v / np.where(n > 0, n, 1), np.nan)

    def mean_sum_rate(self) -> np.ndarray:
        c = np.asarray(self._covered)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(c > 0, np.asarray(self._rate_time) / np.where(c > 0, c, 1), np.nan)

    def mean_reward(self) -> np.ndarray:
        c = np.asarray(self._covered)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(c > 0, np.asarray(self._reward_time) / np.where(c > 0, c, 1), np.nan)

    def series(self, complete_only: bool = True) -> "Series":
        k = self.complete_windows() if complete_only else self.n_windows
        idx = np.arange(k)
        return Series(
            index=idx,
            time=(idx + 1) * self.window_len,
            violation_prob=self.violation_prob()[:k],
            sum_rate=self.mean_sum_rate()[:k],
            reward=self.mean_reward()[:k],
        )

    def summary(self) -> "RunSummary":
        return RunSummary.from_windows(self)


@dataclass
class RunSummary:
    n_arrivals: int
    n_completed: int
    n_violations: int
    violation_prob: float
    violation_ci: float  # batch means over windows, 95% half-width
    violation_ci_binomial: float
    mean_sum_rate: float
    sum_rate_ci: float
    mean_reward: float
    n_windows: int

    @classmethod
    def from_windows(cls, w: WindowStats) -> "RunSummary":
        n = int(sum(w.n_completed))
        v = int(sum(w.n_violations))
        p = v / n if n else math.nan
        k = w.complete_windows()
        probs = w.violation_prob()[:k]
        probs = probs[~np.isnan(probs)]
        rates = w.mean_sum_rate()[:k]
        return cls(
            n_arrivals=w.n_arrivals,
            n_completed=n,
            n_violations=v,
            violation_prob=p,
            violation_ci=_half_width(probs),
            violation_ci_binomial=Z95 * math.sqrt(p * (1 - p) / n) if n else math.nan,
            mean_sum_rate=w._rate_sum / w.n_slots if w.n_slots else math.nan,
            sum_rate_ci=_half_width(rates[~np.isnan(rates)]),
            mean_reward=w._reward_sum / w.n_slots if w.n_slots else math.nan,
            n_windows=k,
        )


def _half_width(x: np.ndarray) -> float:
    if len(x) < 2:
        return math.nan
    return Z95 * float(np.std(x, ddof=1)) / math.sqrt(len(x))


@dataclass
class Series:
    """One run's per-point values (episodes of a learning curve, or windows)."""

    index: np.ndarray
    time: np.ndarray
    violation_prob: np.ndarray
    sum_rate: np.ndarray
    reward: np.ndarray

    def __len__(self) -> int:
        return len(self.index)


@dataclass
class Aggregate:
    index: np.ndarray
    time: np.ndarray
    violation_prob: np.ndarray
    violation_se: np.ndarray
    sum_rate: np.ndarray
    sum_rate_se: np.ndarray
    reward: np.ndarray
    reward_se: np.ndarray
    n_runs: int = 1
    truncated: bool = field(default=False)

    def __len__(self) -> int:
        return len(self.index)

    def columns(self) -> dict[str, np.ndarray]:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def curve_series(curve) -> Series:
    """Per-episode series of a :class:`~tandemq.agent.LearningCurve`."""
    return Series(
        index=curve.column("episode").astype(np.int64),
        time=np.cumsum(curve.column("sim_time")),
        violation_prob=curve.column("violation_prob"),
        sum_rate=curve.column("mean_sum_rate"),
        reward=curve.column("mean_reward"),
    )


def _mean_se(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column mean and standard error, ignoring missing values."""
    n = np.sum(~np.isnan(stack), axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(stack, axis=0)
        spread = np.nanmax(stack, axis=0) > np.nanmin(stack, axis=0)
        sd = np.where((n > 1) & spread, np.nanstd(stack, axis=0, ddof=1), 0.0)
    se = np.where(n > 0, sd / np.sqrt(np.maximum(n, 1)), np.nan)
    return mean, se


def summarize(runs: Sequence[Series]) -> Aggregate:
    """Mean and standard error across runs, point by point.

    Runs of unequal length are cut to the shortest one (with a warning).
    """
    if not runs:
        raise ValueError("summarize needs at least one run")
    m = min(len(r) for r in runs)
    truncated = any(len(r) != m for r in runs)
    if truncated:
        log.warning("runs have unequal lengths %s; truncating to %d", [len(r) for r in runs], m)
    out = {}
    for name in ("violation_prob", "sum_rate", "reward"):
        stack = np.vstack([np.asarray(getattr(r, name)[:m], dtype=np.float64) for r in runs])
        out[name], out[name + "_se"] = _mean_se(stack)
    first = runs[0]
    return Aggregate(
        index=np.asarray(first.index[:m]),
        time=np.asarray(first.time[:m], dtype=np.float64),
        violation_prob=out["violation_prob"],
        violation_se=out["violation_prob_se"],
        sum_rate=out["sum_rate"],
        sum_rate_se=out["sum_rate_se"],
        reward=out["reward"],
        reward_se=out["reward_se"],
        n_runs=len(runs),
        truncated=truncated,
    )


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else f"{x:.9g}"


def export_csv(summary: Aggregate, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(summary)):
            w.writerow([int(summary.index[i])] + [_fmt(getattr(summary, c)[i]) for c in CSV_COLUMNS[1:]])


def read_csv(path) -> Aggregate:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    cols = {c: [] for c in CSV_COLUMNS}
    for row in rows:
        for c in CSV_COLUMNS:
            v = row[c]
            cols[c].append(int(v) if c == "index" else (float(v) if v != "" else math.nan))
    arrays = {c: np.asarray(v, dtype=np.int64 if c == "index" else np.float64) for c, v in cols.items()}
    return Aggregate(**arrays)
