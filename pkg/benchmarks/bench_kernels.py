#!/usr/bin/env python3
"""Compare the numba and numpy backends of the hot kernels.

Each backend runs in its own interpreter because the choice is made at
import time from PARIMUTUEL_NUMBA. Numba timings exclude compilation.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(repeat):
    from parimutuel import _kernels
    from parimutuel.kpm import MarketParams, solve_region
    from parimutuel.partition import book_regions, forced_fills, region_feasible
    from parimutuel.samples import exponential_prior, load_sample

    rng = np.random.default_rng(0)
    points = [(rng.uniform(0.01, 2.0), rng.normal(size=6), rng.dirichlet(np.ones(6))) for _ in range(2000)]
    inner = [(rng.normal(size=4), rng.dirichlet(np.ones(4)), rng.uniform(0.1, 2.0)) for _ in range(5)]

    def lse():
        for mu, w, th in points:
            _kernels.lse_derivatives(mu, w, th)

    def nested():
        for d, q, r in inner:
            _kernels.primal_inner_min(d, q, r)

    book = load_sample("table5")
    params = MarketParams.create(1.0, exponential_prior(5), 2.0)
    regions = [r for r in book_regions(book) if region_feasible(r, book.securities, book.n_states)][:20]

    def regions_solve():
        for r in regions:
            solve_region(book, r, forced_fills(r, book), params)

    lse()
    nested()
    regions_solve()
    out = {
        "backend": _kernels.BACKEND,
        "lse_derivatives x2000": _best(lse, repeat),
        "primal_inner_min x5": _best(nested, max(1, repeat // 5) if _kernels.USE_NUMBA else 1),
        "solve_region x20": _best(regions_solve, max(1, repeat // 5)),
    }
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat)
        return

    rows = []
    for flag in ("1", "0"):
        env = dict(os.environ, PARIMUTUEL_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
                              env=env, capture_output=True, text=True, check=True)
        rows.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    fast, slow = rows
    print(f"{'kernel':<26}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<26}{fast[key]:>11.4f}s{slow[key]:>11.4f}s{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
