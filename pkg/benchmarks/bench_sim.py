"""Compare the compiled and pure-Python event kernels on the default network.

    python3 benchmarks/bench_sim.py [--slots 2000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from tandemq.config import RunConfig
from tandemq.sim import KERNELS, TandemSim


def run(backend: str, cfg: RunConfig, slots: int, seed: int = 0):
    sim = TandemSim(cfg.network, seed, backend=backend)
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(cfg.network.mu_min), np.asarray(cfg.network.mu_max)
    rates = rng.uniform(0.6 * hi + 0.4 * lo, hi, (slots, cfg.network.n_stages))
    t = time.perf_counter()
    delays = []
    for k in range(slots):
        out = sim.run_slot(rates[k], cfg.qos.slot_len, cfg.qos.d_ub)
        delays.append(out.departures.delay)
    return time.perf_counter() - t, np.concatenate(delays), sim.n_departures


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--slots", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cfg = RunConfig.from_dict({})
    results = {}
    for name in KERNELS:
        best = min(run(name, cfg, args.slots)[0] for _ in range(args.repeat))
        _, delays, n = run(name, cfg, args.slots)
        results[name] = (best, delays)
        print(f"{name:>8}: {best:.3f} s for {args.slots} slots, {n} departures, "
              f"{n / best:,.0f} jobs/s")
    if len(results) == 2:
        (a, da), (b, db) = results.values()
        same = np.array_equal(da, db)
        print(f"speed-up {max(a, b) / min(a, b):.1f}x, identical output: {same}")


if __name__ == "__main__":
    main()
