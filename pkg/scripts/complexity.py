"""Per-step wall time of the filter as a function of K (expected to grow as K squared).

    python scripts/complexity.py --ks 10,20,50,100,200
"""
import argparse
import time
from pathlib import Path

import numpy as np

from oatta.filter import FilterConfig, advance, init_filter
from oatta.gate import init_gate

from _common import write_csv


def per_step(K, block, reps, gated):
    Q = np.random.default_rng(K).dirichlet(np.ones(K), size=block)
    gate = init_gate(FilterConfig(K)) if gated else None
    st = gate.filter if gated else init_filter(FilterConfig(K))
    advance(st, Q, gate)
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        advance(st, Q, gate)
        ts.append((time.perf_counter() - t0) / block)
    return float(np.median(ts))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ks", default="10,20,50,100,200")
    ap.add_argument("--block", type=int, default=200)
    ap.add_argument("--reps", type=int, default=31)
    ap.add_argument("--out", type=Path, default=Path("results") / "complexity")
    args = ap.parse_args()
    rows = []
    for K in map(int, args.ks.split(",")):
        plain, gated = per_step(K, args.block, args.reps, False), per_step(K, args.block, args.reps, True)
        rows.append([K, plain, gated, plain / K**2])
        print(f"K={K:>4}: {1e6 * plain:9.3f} us/step  gated {1e6 * gated:9.3f} us/step  per K^2 {1e9 * plain / K**2:.3f} ns")
    write_csv(args.out / "timing.csv", ["K", "seconds_per_step", "seconds_per_step_gated", "seconds_per_K2"], rows)


if __name__ == "__main__":
    main()
