"""Simulator self-checks against closed-form queueing results."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DistSpec, derive_seed
from .sim import (Departures, NetworkConfig, TandemSim, mm1_delay_tail_oracle,
                  tandem_mm1_mean_delay_oracle)


@dataclass
class CheckResult:
    name: str
    target: float
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: measured={self.measured:.6g} target={self.target:.6g} "
                f"tol={self.tolerance:.3g} {self.detail}").rstrip()


def _exp_network(lam: float, mus, servers=None) -> NetworkConfig:
    mus = list(mus)
    return NetworkConfig(
        servers=tuple(servers or [1] * len(mus)),
        arrival=DistSpec.exponential(1.0 / lam),
        service_work=tuple(DistSpec.exponential(1.0) for _ in mus),
        mu_min=tuple(0.5 * (m + lam) for m in mus),
        mu_max=tuple(2.0 * m for m in mus),
    )


def collect_departures(sim: TandemSim, n: int, chunk: float | None = None) -> Departures:
    """Run until at least ``n`` jobs have left; return the first ``n`` of them."""
    chunk = chunk or max(1000.0, 0.25 * n * sim.config.arrival.mean)
    parts, got = [], 0
    while got < n:
        d = sim.run_until(sim.clock + chunk)
        parts.append(d)
        got += len(d)
    out = Departures.concat(parts)
    return out[np.arange(len(out)) < n]


def check_mm1_tail(n_departures: int = 10**6, lam: float = 0.5, mu: float = 1.0, t: float = 2.0,
                   tol: float = 0.005, seed: int = 0, backend: str | None = None) -> CheckResult:
    sim = TandemSim(_exp_network(lam, [mu]), derive_seed(seed, 100), backend=backend)
    sim.set_rates([mu])
    d = collect_departures(sim, n_departures)
    p = float(np.mean(d.delay > t))
    target = mm1_delay_tail_oracle(lam, mu, t)
    return CheckResult(f"mm1_tail P(D>{t:g})", target, p, tol, abs(p - target) <= tol,
                       f"n={len(d)}")


def check_tandem_mean(n_departures: int = 10**6, lam: float = 0.5, mus=(1.0, 0.8, 1.25),
                      rel_tol: float = 0.02, seed: int = 0, backend: str | None = None) -> CheckResult:
    sim = TandemSim(_exp_network(lam, mus), derive_seed(seed, 101), backend=backend)
    sim.set_rates(list(mus))
    d = collect_departures(sim, n_departures)
    m = float(np.mean(d.delay))
    target = tandem_mm1_mean_delay_oracle(lam, list(mus))
    return CheckResult("tandem_mm1 mean delay", target, m, rel_tol * target,
                       abs(m - target) <= rel_tol * target, f"n={len(d)}")


def check_deterministic_toy(backend: str | None = None) -> CheckResult:
    """Arrivals every 1.0 from t=1, work 0.5 at rate 1: nine jobs by t=10, each 0.5 in system."""
    cfg = NetworkConfig(
        servers=(1,),
        arrival=DistSpec.deterministic(1.0),
        service_work=(DistSpec.deterministic(0.5),),
        mu_min=(0.6,),
        mu_max=(1.0,),
    )
    sim = TandemSim(cfg, 0, backend=backend)
    d = sim.run_until(10.0)
    ok = len(d) == 9 and bool(np.all(d.delay == 0.5))
    worst = float(np.max(np.abs(d.delay - 0.5))) if len(d) else math.inf
    return CheckResult("deterministic toy", 0.0, worst, 0.0, ok, f"departures={len(d)}")


def _integrated_rate(times: np.ndarray, rates: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integral over [a, b] of the right-continuous step function with
    breakpoints ``times`` (first entry 0) and values ``rates``."""
    cum = np.concatenate([[0.0], np.cumsum(np.diff(times) * rates[:-1])])

    def prim(t):
        k = np.searchsorted(times, t, side="right") - 1
        return cum[k] + (t - times[k]) * rates[k]

    return prim(b) - prim(a)


def check_schedule(cfg: NetworkConfig, seed, n_slots: int, slot_lens: np.ndarray,
                   rates: np.ndarray, backend: str | None = None) -> list[str]:
    """Drive one random rate schedule; return the list of broken properties."""
    sim = TandemSim(cfg, seed, backend=backend)
    problems = []
    times = [0.0]
    hist = [list(sim.rates)]
    parts = []
    for k in range(n_slots):
        sim.set_rates(rates[k])
        if sim.clock > times[-1]:
            times.append(sim.clock)
            hist.append(list(sim.rates))
        else:
            hist[-1] = list(sim.rates)
        parts.append(sim.run_until(sim.clock + slot_lens[k]))
        try:
            sim.check_invariants()
        except AssertionError as e:
            problems.append(f"slot {k}: {e}")
    d = Departures.concat(parts)
    if sim.n_arrivals != sim.n_departures + sim.in_system():
        problems.append("conservation")
    if len(d) == 0:
        return problems
    order = np.argsort(d.job_id)
    start, dep, work = d.start[order].T, d.departure[order].T, d.work[order].T
    arr = d.arrival[order]
    times_a = np.asarray(times)
    hist_a = np.asarray(hist)
    for s in range(cfg.n_stages):
        enter = arr if s == 0 else dep[s - 1]
        if np.any(start[s] < enter - 1e-12):
            problems.append(f"stage {s}: service began before arrival")
        # FCFS: service starts follow the order of arrival at the stage
        seq = np.lexsort((d.job_id[order], enter))
        if np.any(np.diff(start[s][seq]) < -1e-12):
            problems.append(f"stage {s}: FCFS order broken")
        done = _integrated_rate(times_a, hist_a[:, s], start[s], dep[s])
        if not np.allclose(done, work[s], rtol=1e-9, atol=1e-9):
            problems.append(f"stage {s}: work not conserved across rate changes")
    return problems


def random_network(rng: np.random.Generator) -> NetworkConfig:
    n = int(rng.integers(1, 4))
    lam = float(rng.uniform(0.2, 1.5))
    servers = [int(rng.integers(1, 4)) for _ in range(n)]
    fams = [DistSpec.exponential, lambda m: DistSpec.gamma(m, float(rng.uniform(0.2, 2.0)))]
    work = [fams[int(rng.integers(2))](float(rng.uniform(0.5, 2.0))) for _ in range(n)]
    mu_min = [lam * w.mean / c / float(rng.uniform(0.3, 0.95)) for w, c in zip(work, servers)]
    mu_max = [m * float(rng.uniform(1.2, 3.0)) for m in mu_min]
    return NetworkConfig(tuple(servers), fams[int(rng.integers(2))](1.0 / lam), tuple(work),
                         tuple(mu_min), tuple(mu_max))


def check_random_schedules(n_schedules: int = 1000, seed: int = 0,
                           backend: str | None = None) -> CheckResult:
    rng = np.random.default_rng(derive_seed(seed, 102))
    failures = []
    for i in range(n_schedules):
        cfg = random_network(rng)
        n_slots = int(rng.integers(1, 30))
        slot_lens = rng.uniform(0.5, 20.0, n_slots)
        rates = rng.uniform(cfg.mu_min, cfg.mu_max, (n_slots, cfg.n_stages))
        bad = check_schedule(cfg, derive_seed(seed, 103, i), n_slots, slot_lens, rates, backend)
        if bad:
            failures.append(f"#{i}: {bad[0]}")
    return CheckResult("conservation/FCFS/rescaling schedules", 0.0, float(len(failures)), 0.0,
                       not failures, f"schedules={n_schedules} " + "; ".join(failures[:3]))


def run_suite(n_departures: int = 10**6, n_schedules: int = 1000, seed: int = 0,
              backend: str | None = None) -> list[CheckResult]:
    return [
        check_deterministic_toy(backend),
        check_mm1_tail(n_departures, seed=seed, backend=backend),
        check_tandem_mean(n_departures, seed=seed, backend=backend),
        check_random_schedules(n_schedules, seed=seed, backend=backend),
    ]
