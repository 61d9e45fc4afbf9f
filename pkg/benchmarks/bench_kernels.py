"""Timing of the numba kernels against the pure-numpy path.

Run: python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Times ``node_sums`` (the per-node work of the backward scheme) for several
batch sizes in one and two dimensions, then one small end-to-end solve.  The
first numba call is excluded from the timings (compilation warm-up).
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace

import numpy as np

from levymc import _kernels
from levymc.bench import get_problem
from levymc.bench.config import default_padding
from levymc.scheme import SchemeConfig, solve_backward


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _inputs(dim, m, rng):
    shape = (201,) * dim
    values = rng.normal(size=shape)
    lo, dx = np.full(dim, -5.0), np.full(dim, 0.05)
    landing = rng.normal(scale=1.5, size=(m, dim))
    w = rng.normal(scale=0.1, size=(m, dim))
    n_jumps = rng.poisson(0.02, m).astype(np.int64)
    mark_sum = rng.normal(size=m) * n_jumps
    dscale = np.array([[0.5] * dim])
    return values, lo, dx, landing, w, n_jumps, mark_sum, dscale


def bench_node_sums(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for dim in (1, 2):
        for m in (1_000, 10_000, 100_000):
            args = _inputs(dim, m, rng)
            _kernels.node_sums(*args, use_numba=True)
            t_np = _best(lambda: _kernels.node_sums(*args, use_numba=False), repeat)
            t_nb = _best(lambda: _kernels.node_sums(*args, use_numba=True), repeat)
            rows.append(("node_sums", dim, m, t_np, t_nb))
    return rows


def bench_solve(repeat):
    prob = get_problem("concave-hjb-toy")
    cfg = SchemeConfig(T=prob.T, n=5, lo=[prob.lo], hi=[prob.hi], dx=0.1, padding=default_padding(prob),
                       samples=10_000, seed=0)
    run = lambda flag: solve_backward(prob.problem, prob.measure, replace(cfg, use_numba=flag), prob.g)
    run(True)
    return [("solve_backward", 1, cfg.samples, _best(lambda: run(False), repeat), _best(lambda: run(True), repeat))]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", help="also write the table to this path")
    args = ap.parse_args(argv)
    if not _kernels.HAS_NUMBA:
        print("numba is unavailable (or disabled by LEVYMC_DISABLE_NUMBA); nothing to compare", file=sys.stderr)
        return 1
    rows = bench_node_sums(args.repeat) + bench_solve(max(1, args.repeat // 2))
    header = ("kernel", "dim", "samples", "numpy_s", "numba_s", "speedup")
    table = [r + (r[3] / r[4],) for r in rows]
    print(f"{'kernel':<16}{'dim':>4}{'samples':>10}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>9}")
    for k, d, m, a, b, s in table:
        print(f"{k:<16}{d:>4}{m:>10}{a:>12.5f}{b:>12.5f}{s:>9.2f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            wr.writerows(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
