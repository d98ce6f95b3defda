#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python twins.

Covers the two hot paths: the expected-cost table build and the
nested-testing Monte Carlo loop.  Also asserts the results agree bit for
bit, so the speedup never buys a different answer.
"""

import argparse
import time

import numpy as np

from poolscreen import _kernels_py

try:
    from poolscreen import _kernels
except ImportError:
    _kernels = None


def timed(fn, *args, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--table-n", type=int, default=256)
    parser.add_argument("--alpha", type=float, default=0.1)
    parser.add_argument("--trials", type=int, default=100_000)
    parser.add_argument("--mc-n", type=int, default=32)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    if _kernels is None:
        print("compiled kernels not built; showing pure-Python times only")

    print(f"table build: alpha={args.alpha} n_max={args.table_n}")
    t_py, (g_py, c_py) = timed(_kernels_py.g_table, args.alpha, args.table_n, repeat=1)
    print(f"  python   {t_py * 1e3:10.1f} ms")
    if _kernels is not None:
        t_c, (g_c, c_c) = timed(_kernels.g_table, args.alpha, args.table_n)
        assert np.array_equal(g_py, g_c) and np.array_equal(c_py, c_c)
        print(f"  compiled {t_c * 1e3:10.1f} ms   ({t_py / t_c:6.1f}x, bit-identical)")

    choice = c_py[: args.mc_n + 1, : args.mc_n + 1]
    print(f"simulated runs: alpha={args.alpha} n={args.mc_n} trials={args.trials}")
    t_py, r_py = timed(_kernels_py.nt_trials, args.alpha, args.mc_n,
                       args.trials, args.seed, choice, repeat=1)
    print(f"  python   {t_py * 1e3:10.1f} ms   (mean tests {r_py[0].mean():.4f})")
    if _kernels is not None:
        t_c, r_c = timed(_kernels.nt_trials, args.alpha, args.mc_n,
                         args.trials, args.seed, choice)
        assert all(np.array_equal(a, b) for a, b in zip(r_py, r_c))
        print(f"  compiled {t_c * 1e3:10.1f} ms   ({t_py / t_c:6.1f}x, bit-identical)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
