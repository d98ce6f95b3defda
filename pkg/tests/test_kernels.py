"""Kernel backends: pure Python vs compiled must agree bit for bit."""

import numpy as np
import pytest

from conftest import run_ideal
from poolscreen import _kernels_py, backend
from poolscreen.planners import NestedPlanner, build_cost_table
from poolscreen.rng import (MASK64, mix64, stream_key, u01_at, u01_block,
                            u64_at)

try:
    from poolscreen import _kernels
    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED,
                                    reason="compiled kernels not built")


class TestRng:
    def test_draws_are_pure_functions(self):
        key = stream_key(42, 7, 1)
        assert u64_at(key, 5) == u64_at(key, 5)
        assert u64_at(key, 5) != u64_at(key, 6)
        assert stream_key(42, 7, 1) != stream_key(42, 7, 2)
        assert stream_key(42, 7, 1) != stream_key(42, 8, 1)

    def test_unit_interval(self):
        key = stream_key(1, 0, 3)
        draws = [u01_at(key, i) for i in range(10000)]
        assert all(0.0 <= u < 1.0 for u in draws)
        assert abs(sum(draws) / len(draws) - 0.5) < 0.02

    def test_vector_matches_scalar(self):
        key = stream_key(123, 4, 2)
        block = u01_block(key, 100, 256)
        scalar = np.array([u01_at(key, 100 + i) for i in range(256)])
        assert np.array_equal(block, scalar)

    def test_mix64_stays_in_range(self):
        for z in (0, 1, MASK64, 0xDEADBEEF):
            assert 0 <= mix64(z) <= MASK64


class TestPureKernels:
    def test_table_matches_scalar_recursion(self):
        alpha = 0.1
        g, choice = _kernels_py.g_table(alpha, 2)
        assert g[2][2] == pytest.approx(1 + 1 / (2 - alpha), abs=1e-12)
        assert g[0][2] == pytest.approx(1.29, abs=1e-12)
        assert choice[0][2] == 2

    def test_trials_match_planner_traces(self):
        """The fast trial loop reproduces the state machine exactly: same
        test count for the same drawn pattern, trial by trial."""
        alpha, n, trials, seed = 0.3, 9, 300, 11
        table = build_cost_table(alpha, n)
        tests, npos, incid = _kernels_py.nt_trials(alpha, n, trials, seed, table.choice)
        for trial in range(trials):
            key = stream_key(seed, trial, 1)
            infected = {i + 1 for i in range(n) if u01_at(key, i) < alpha}
            stats = run_ideal(NestedPlanner(list(range(1, n + 1)), alpha, table=table),
                              infected)
            assert stats["tests"] == tests[trial]
            assert len(infected) == npos[trial]


@needs_compiled
class TestCompiledEquivalence:
    def test_tables_bit_identical(self):
        for alpha, n_max in [(0.05, 40), (0.1, 16), (0.2, 64), (0.5, 25), (0.9, 12)]:
            gp, cp = _kernels_py.g_table(alpha, n_max)
            gc, cc = _kernels.g_table(alpha, n_max)
            assert np.array_equal(gp, gc)
            assert np.array_equal(cp, cc)

    def test_trials_bit_identical(self):
        for alpha, n, trials, seed in [(0.05, 16, 500, 42), (0.3, 10, 400, 0),
                                       (0.2, 32, 200, 987654321)]:
            _, choice = _kernels_py.g_table(alpha, n)
            rp = _kernels_py.nt_trials(alpha, n, trials, seed, choice)
            rc = _kernels.nt_trials(alpha, n, trials, seed, choice)
            for a, b in zip(rp, rc):
                assert np.array_equal(a, b)

    def test_backend_selected_compiled(self):
        assert backend.KERNEL_BACKEND in ("compiled", "python")
