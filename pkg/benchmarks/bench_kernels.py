"""Compare the compiled and numpy kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from searchgame import kernels
from searchgame.equilibrium import simplex_grid
from searchgame.rules import make_rule


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    for name, k, N, m in [("proportional", 2, 3, 12), ("markovian", 3, 3, 6), ("majority", 2, 4, 8)]:
        G = simplex_grid(N, m)
        gamma = rng.dirichlet(np.ones(N))
        rule = make_rule(name, k)
        label = f"grid_payoffs {name} k={k} N={N} m={m} ({G.shape[0] ** k} profiles)"
        yield label, lambda backend, rule=rule, G=G, gamma=gamma, k=k: kernels.grid_payoffs(
            rule, G, gamma, 0.5, k, backend=backend
        )
    for n_atoms, n_types, k in [(30, 40, 3), (60, 100, 3)]:
        cover = rng.uniform(size=(n_atoms, n_types)) < 0.15
        w = rng.dirichlet(np.ones(n_types))
        label = f"coverage_exhaustive atoms={n_atoms} types={n_types} k={k}"
        yield label, lambda backend, cover=cover, w=w, k=k: kernels.coverage_exhaustive(
            cover, w, k, backend=backend
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled kernels are not built; only the numpy timings are shown")
    print(f"{'case':<62} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8}")
    for label, fn in cases():
        py = best_time(lambda: fn("python"), args.repeat)
        if kernels.BACKEND == "cython":
            cy = best_time(lambda: fn("cython"), args.repeat)
            print(f"{label:<62} {py:11.4f} {cy:11.4f} {py / cy:8.1f}")
        else:
            print(f"{label:<62} {py:11.4f} {'-':>11} {'-':>8}")


if __name__ == "__main__":
    main()
