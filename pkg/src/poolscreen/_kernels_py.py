"""Pure-Python kernels: expected-cost table build and nested-testing trials.

These are the hot paths of the package.  A compiled twin with identical
semantics lives in ``_kernels.pyx``; the test suite asserts bit-for-bit
equality between the two, so every float expression here must keep the
exact shape of its compiled counterpart.
"""

from __future__ import annotations

import numpy as np

from .rng import STREAM_TRUTH, stream_key, u01_at

NAME = "python"


def g_table(alpha: float, n_max: int):
    """Expected-cost recursion, bottom-up.

    Returns (g, choice): g[m][n] is the expected number of further tests
    with n undiagnosed samples, m of them in a group holding at least one
    infected sample; choice[m][n] is the minimizing next group size (ties
    to the smallest).
    """
    q = 1.0 - alpha
    size = n_max + 1
    g = [[0.0] * size for _ in range(size)]
    choice = [[0] * size for _ in range(size)]
    qpow = [0.0] * size
    qpow[0] = 1.0
    for i in range(1, size):
        qpow[i] = qpow[i - 1] * q
    inf = float("inf")
    for n in range(1, size):
        g[1][n] = g[0][n - 1]
        gn = [row[n] for row in g]  # column cache for the inner loops
        for m in range(2, n + 1):
            denom = 1.0 - qpow[m]
            best = inf
            best_x = 1
            for x in range(1, m):
                v = (1.0 + (qpow[x] - qpow[m]) / denom * g[m - x][n - x]
                     + (1.0 - qpow[x]) / denom * gn[x])
                if v < best:
                    best = v
                    best_x = x
            g[m][n] = best
            gn[m] = best
            choice[m][n] = best_x
        best = inf
        best_x = 1
        for x in range(1, n + 1):
            v = 1.0 + qpow[x] * g[0][n - x] + (1.0 - qpow[x]) * gn[x]
            if v < best:
                best = v
                best_x = x
        g[0][n] = best
        choice[0][n] = best_x
    return (np.array(g, dtype=np.float64), np.array(choice, dtype=np.int32))


def nt_trials(alpha: float, n: int, trials: int, seed: int, choice) -> tuple:
    """Monte Carlo nested-testing runs under an ideal test.

    Per trial: draw the infection pattern from the (seed, trial) truth
    stream, then follow the planner's group sequence exactly.  Returns
    per-trial arrays (tests, infected count, summed group sizes).
    """
    ch = [list(map(int, row)) for row in np.asarray(choice)]
    tests_out = np.empty(trials, dtype=np.int64)
    pos_out = np.empty(trials, dtype=np.int64)
    incid_out = np.empty(trials, dtype=np.int64)
    for trial in range(trials):
        key = stream_key(seed, trial, STREAM_TRUTH)
        infected = [u01_at(key, i) < alpha for i in range(n)]
        ub = list(range(n))
        pib: list[int] = []
        tests = 0
        incid = 0
        found = 0
        while ub or pib:
            if pib:
                m = len(pib)
                if m == 1:
                    found += 1
                    pib = []
                    continue
                size = ch[m][m + len(ub)]
                group = pib[:size]
                tests += 1
                incid += size
                if any(infected[i] for i in group):
                    ub.extend(pib[size:])
                    pib = group
                else:
                    pib = pib[size:]
            else:
                size = ch[0][len(ub)]
                group = ub[:size]
                tests += 1
                incid += size
                ub = ub[size:]
                if any(infected[i] for i in group):
                    pib = group
        tests_out[trial] = tests
        pos_out[trial] = sum(infected)
        incid_out[trial] = incid
        if found != pos_out[trial]:
            raise AssertionError("ideal-oracle trace lost an infected sample")
    return (tests_out, pos_out, incid_out)
