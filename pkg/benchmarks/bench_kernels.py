"""Time the numba and numpy forms of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both forms are imported directly, so the result does not depend on
ROBUST_RERM_NO_NUMBA. The first numba call (compilation) is excluded.
"""
import argparse
import time

import numpy as np

from robust_rerm import _kernels
from robust_rerm.datagen import make_rng


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = make_rng(0, 99)
    values = rng.standard_normal(20_000)
    blocks = rng.permutation(20_000)[:19_975].reshape(235, 85)
    yield "block_means 235x85", lambda f: f(values, blocks)

    G = np.ascontiguousarray(rng.standard_normal((400, 1000)))
    yield "l1l2_sup 400x1000", lambda f: f(G, 10.0, 1.0)

    n, k = 2000, 64
    Psi = np.ascontiguousarray(rng.standard_normal((n, k)) / np.sqrt(k))
    y = rng.standard_normal(n)
    lo, hi = np.full(n, -0.5 / n), np.full(n, 0.5 / n)
    sq = np.einsum("ij,ij->i", Psi, Psi)
    order = rng.permutation(n)

    def dual(f):
        u, w = np.zeros(n), np.zeros(k)
        f(Psi, y, lo, hi, 0.01, u, w, sq, order)
    yield "dual_cd epoch 2000x64", dual


PAIRS = {
    "block_means": (_kernels.block_means_numba, _kernels.block_means_numpy),
    "l1l2_sup": (_kernels.l1l2_sup_numba, _kernels.l1l2_sup_numpy),
    "dual_cd": (_kernels.dual_cd_numba, _kernels.dual_cd_numpy),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<24}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, call in cases():
        fast, slow = PAIRS[name.split()[0]]
        call(fast)  # compile
        t_fast = best_of(lambda: call(fast), args.repeat)
        t_slow = best_of(lambda: call(slow), args.repeat)
        print(f"{name:<24}{1e3 * t_fast:>12.3f}{1e3 * t_slow:>12.3f}{t_slow / t_fast:>10.1f}x")


if __name__ == "__main__":
    main()
