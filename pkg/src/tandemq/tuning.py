"""Trade-off coefficient sweep, KKT-style selection, and slot-length advice."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import LearningCurve
from .config import RunConfig
from .env import QosSpec
from .experiment import AgentPolicy, evaluate, pool, train_one
from .metrics import WindowStats
from .sim import NetworkConfig, relaxation_time_mm1

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("lambda", "seed", "violation_prob", "violation_ci", "sum_rate", "sum_rate_ci",
                 "checkpoint_path")


@dataclass
class SweepRow:
    lambda_tradeoff: float
    violation_prob: float
    violation_ci: float
    sum_rate: float
    sum_rate_ci: float
    seeds: tuple[int, ...] = ()
    checkpoint_path: str = ""


@dataclass
class SweepResult:
    """One row per (lambda, training seed); ``by_lambda`` pools the seeds."""

    rows: list[SweepRow] = field(default_factory=list)
    windows: dict[float, list[WindowStats]] = field(default_factory=dict)
    curves: dict[tuple[float, int], LearningCurve] = field(default_factory=dict)

    def by_lambda(self) -> list[SweepRow]:
        out = []
        for lam in sorted({r.lambda_tradeoff for r in self.rows}):
            rows = [r for r in self.rows if r.lambda_tradeoff == lam]
            seeds = tuple(s for r in rows for s in r.seeds)
            if lam in self.windows:
                s = pool(self.windows[lam])
                out.append(SweepRow(lam, s.violation_prob, s.violation_ci, s.mean_sum_rate,
                                    s.sum_rate_ci, seeds))
            else:
                vp = np.array([r.violation_prob for r in rows])
                sr = np.array([r.sum_rate for r in rows])
                out.append(SweepRow(lam, float(vp.mean()), _ci(vp, rows, "violation_ci"),
                                    float(sr.mean()), _ci(sr, rows, "sum_rate_ci"), seeds))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                w.writerow([f"{r.lambda_tradeoff:.9g}", ";".join(map(str, r.seeds)),
                            f"{r.violation_prob:.9g}", f"{r.violation_ci:.9g}",
                            f"{r.sum_rate:.9g}", f"{r.sum_rate_ci:.9g}", r.checkpoint_path])

    @classmethod
    def from_csv(cls, path) -> "SweepResult":
        rows = []
        with open(path, newline="") as f:
            for d in csv.DictReader(f):
                rows.append(SweepRow(
                    float(d["lambda"]), float(d["violation_prob"]), float(d["violation_ci"]),
                    float(d["sum_rate"]), float(d["sum_rate_ci"]),
                    tuple(int(s) for s in d["seed"].split(";") if s), d["checkpoint_path"],
                ))
        return cls(rows)


def _ci(values: np.ndarray, rows: Sequence[SweepRow], attr: str) -> float:
    if len(values) > 1:
        return 1.959963984540054 * float(np.std(values, ddof=1)) / math.sqrt(len(values))
    return float(getattr(rows[0], attr))


def lambda_sweep(
    cfg: RunConfig,
    lambdas: Sequence[float],
    seeds: Sequence[int],
    episodes: int | None = None,
    out_dir=None,
) -> SweepResult:
    """Train one controller per (lambda, seed) and evaluate each greedily.

    Every controller is evaluated on the same evaluation sample paths, so
    differences between rows come from the policies alone.
    """
    if not lambdas:
        raise ValueError("lambda grid is empty")
    result = SweepResult()
    for lam in lambdas:
        cell_cfg = cfg.replace(qos={"lambda_tradeoff": float(lam)})
        result.windows[float(lam)] = []
        for s in seeds:
            agent, curve = train_one(cell_cfg, s, episodes)
            result.curves[(float(lam), s)] = curve
            ev = evaluate(cell_cfg, AgentPolicy(agent))
            ckpt = ""
            if out_dir is not None:
                d = Path(out_dir) / f"lambda_{lam:g}" / f"seed_{s}"
                agent.save(d)
                ckpt = str(d)
            p = ev.pooled
            result.rows.append(SweepRow(float(lam), p.violation_prob, p.violation_ci,
                                        p.mean_sum_rate, p.sum_rate_ci, (s,), ckpt))
            result.windows[float(lam)].extend(ev.windows)
            log.info("lambda=%g seed=%d: violation=%.4f±%.4f sum_rate=%.3f", lam, s,
                     p.violation_prob, p.violation_ci, p.mean_sum_rate)
    return result


@dataclass
class Selection:
    lambda_star: float
    row: SweepRow
    constraint_met: bool


def select_lambda(rows: Sequence[SweepRow], eps_ub: float) -> Selection:
    """Cheapest trade-off coefficient whose violation respects the budget.

    Rows qualify when ``violation_prob <= eps_ub + violation_ci``; among them
    the lowest average sum-rate wins, ties going to the smaller lambda. With
    no qualifying row, the one closest to ``eps_ub`` is returned and
    ``constraint_met`` is False.
    """
    if isinstance(rows, SweepResult):
        rows = rows.by_lambda()
    if not rows:
        raise ValueError("no sweep rows to select from")

    def slack(r):
        return 0.0 if math.isnan(r.violation_ci) else r.violation_ci

    ok = [r for r in rows if r.violation_prob <= eps_ub + slack(r)]
    if ok:
        best = min(ok, key=lambda r: (r.sum_rate, r.lambda_tradeoff))
        return Selection(best.lambda_tradeoff, best, True)
    best = min(rows, key=lambda r: (abs(r.violation_prob - eps_ub), r.lambda_tradeoff))
    log.warning("no lambda on the grid meets the violation budget %g", eps_ub)
    return Selection(best.lambda_tradeoff, best, False)


def slot_length_advisor(qos: QosSpec, network: NetworkConfig,
                        multipliers: Sequence[float] = (1.5, 3.0, 10.0)) -> dict:
    """Advisory report for picking the slot length; trains nothing.

    Each server is approximated as an M/M/1 queue fed with ``1/c`` of the
    traffic, at the slowest, middle and fastest admissible rates.
    """
    lam = network.arrival_rate
    stages = []
    for i, (c, w, lo, hi) in enumerate(zip(network.servers, network.service_work,
                                           network.mu_min, network.mu_max)):
        per_server = lam / c
        entry = {"stage": i, "servers": c, "per_server_arrival_rate": per_server}
        for name, rate in (("mu_min", lo), ("mu_mid", 0.5 * (lo + hi)), ("mu_max", hi)):
            entry[f"relaxation_at_{name}"] = relaxation_time_mm1(per_server, rate / w.mean)
        stages.append(entry)
    grid = [m * qos.d_ub for m in multipliers if m * qos.d_ub > qos.d_ub]
    return {
        "d_ub": qos.d_ub,
        "recommended_slot_lengths": grid,
        "stages": stages,
        "note": "slots of the order of d_ub are suggested; every entry satisfies T > d_ub",
    }
