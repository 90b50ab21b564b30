#!/usr/bin/env python3
"""
Compare the numba loop kernels with their numpy fallbacks.

Times three workloads:
1. batch: one rule against many candidates (what prune does per rule)
2. clauses: one rule against one input vector
3. csr: a stacked block-diagonal system against one joint vector

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --candidates 8 64 512 --repeat 2000
    python3 benchmarks/bench_kernels.py --output kernels.json
"""

import argparse
import json
import time

import numpy as np

from megabike import _kernels
from megabike.rules import build_rule, stack


def best_of(fn, repeat, rounds=5):
    """Best per-call time in microseconds over ``rounds`` batches."""
    best = float("inf")
    for _ in range(rounds):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best * 1e6


def null_like_rule(n, m):
    # all clauses pass on the inputs drawn below, so no early exit skews timings
    return build_rule("bench", "target_selection", False, ["distance"] * (m - 1) + ["one"],
                      np.zeros((n, m)), ["="] * n)


def bench_batch(rng, candidates, repeat, n=4, m=4):
    rule = null_like_rule(n, m)
    X = rng.uniform(-10, 10, (m, candidates))
    X[-1] = 1.0
    out = {}
    for name, fn in (("numba", _kernels.compiled_kernels["batch"]),
                     ("numpy", _kernels.numpy_kernels["batch"])):
        out[name] = best_of(
            lambda: fn(rule.matrix, rule.ops, X, np.ones(candidates, dtype=np.bool_)), repeat)
    return out


def bench_clauses(rng, repeat, n=4, m=4):
    rule = null_like_rule(n, m)
    x = np.append(rng.uniform(-10, 10, m - 1), 1.0)
    res = np.zeros(n, dtype=np.bool_)
    return {
        name: best_of(lambda: fn(rule.matrix, rule.ops, x, res), repeat)
        for name, fn in (("numba", _kernels.compiled_kernels["clauses"]),
                         ("numpy", _kernels.numpy_kernels["clauses"]))
    }


def bench_csr(rng, rules, repeat, n=3, m=4):
    system = stack([null_like_rule(n, m) for _ in range(rules)])
    A = system.matrix
    x = rng.uniform(-10, 10, A.shape[1])
    x[-1] = 1.0
    return {
        name: best_of(lambda: fn(A.data, A.indices, A.indptr, system.ops, x), repeat)
        for name, fn in (("numba", _kernels.compiled_kernels["csr"]),
                         ("numpy", _kernels.numpy_kernels["csr"]))
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--candidates", type=int, nargs="+", default=[1, 8, 64, 512])
    parser.add_argument("--stacked", type=int, nargs="+", default=[1, 10, 100])
    parser.add_argument("--repeat", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", help="write results as JSON")
    args = parser.parse_args()

    if not _kernels.USE_NUMBA:
        print("numba disabled (MEGABIKE_DISABLE_NUMBA or import failure); "
              "both columns time the numpy path")
    _kernels.warmup()
    rng = np.random.default_rng(args.seed)
    results = {"backend": _kernels.BACKEND, "batch": {}, "csr": {}}

    print(f"{'workload':<24}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")

    def row(label, r):
        print(f"{label:<24}{r['numba']:>12.2f}{r['numpy']:>12.2f}"
              f"{r['numpy'] / r['numba']:>9.1f}x")

    r = bench_clauses(rng, args.repeat)
    results["clauses"] = r
    row("clauses 4x4", r)
    for c in args.candidates:
        r = bench_batch(rng, c, args.repeat)
        results["batch"][c] = r
        row(f"batch 4x4, C={c}", r)
    for k in args.stacked:
        r = bench_csr(rng, k, args.repeat)
        results["csr"][k] = r
        row(f"csr {k} rules", r)

    if args.output:
        with open(args.output, "w") as fh:
            json.dump(results, fh, indent=2)
        print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
