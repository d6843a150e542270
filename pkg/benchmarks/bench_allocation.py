"""Benchmark the max-min allocation kernels (compiled vs pure Python).

Usage:
    python3 benchmarks/bench_allocation.py [--flows 2000] [--elems 500] \
        [--repeats 5] [--seed 0]

Generates random allocation instances at a few sizes, times both
backends on identical CSR inputs, and prints a per-size speedup table.
The compiled backend is skipped (with a note) if it was not built.
"""

import argparse
import time

import numpy as np

from torsim.sim import allocation


def make_instance(rng, n_flows, n_elems, max_path=5):
    capacities = rng.uniform(1e5, 1e8, size=n_elems)
    flows = []
    for _ in range(n_flows):
        k = int(rng.integers(1, min(max_path, n_elems) + 1))
        flows.append(sorted(rng.choice(n_elems, size=k, replace=False).tolist()))
    return flows, capacities


def bench(backend, instances, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for flows, caps in instances:
            allocation.max_min_allocate(flows, caps, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.Generator(np.random.PCG64(args.seed))
    sizes = [(50, 20), (500, 120), (2000, 500), (8000, 2000)]
    have_cython = allocation.BACKEND == "cython"
    if not have_cython:
        print("note: compiled kernel not built; timing pure Python only")
    print(f"{'flows':>7} {'elems':>6} {'python (s)':>11} {'cython (s)':>11} {'speedup':>8}")
    for n_flows, n_elems in sizes:
        instances = [make_instance(rng, n_flows, n_elems) for _ in range(args.instances)]
        t_py = bench("python", instances, args.repeats)
        if have_cython:
            t_cy = bench("cython", instances, args.repeats)
            print(f"{n_flows:>7} {n_elems:>6} {t_py:>11.4f} {t_cy:>11.4f} {t_py / t_cy:>7.1f}x")
        else:
            print(f"{n_flows:>7} {n_elems:>6} {t_py:>11.4f} {'-':>11} {'-':>8}")


if __name__ == "__main__":
    main()
