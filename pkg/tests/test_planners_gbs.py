"""Generalized binary splitting planner."""

import math
from itertools import combinations

import pytest

from conftest import ideal_trace, run_ideal
from poolscreen.errors import ConfigError, ProtocolError
from poolscreen.planners import (GroupOutcome, create_planner,
                                 gbs_worst_case_bound, planner_from_doc)
from poolscreen.planners.gbs import GbsPlanner, per_sample_query_bound


class TestBounds:
    def test_known_values(self):
        assert gbs_worst_case_bound(8, 1) == 4.0
        assert gbs_worst_case_bound(16, 2) == pytest.approx(math.log2(120) + 2)
        assert gbs_worst_case_bound(16, 2) == pytest.approx(8.9069, abs=1e-4)
        assert gbs_worst_case_bound(10, 0) == 0.0

    def test_per_sample_bound(self):
        assert per_sample_query_bound(8, 1) == 4
        assert per_sample_query_bound(16, 2) == 4


class TestFirstQuery:
    def test_whole_pool_for_single_defective(self):
        p = create_planner("gbs", 8, d=1)
        (q,) = p.pending()
        assert q.members == (1, 2, 3, 4, 5, 6, 7, 8)

    def test_group_size_follows_allowance(self):
        p = create_planner("gbs", 8, d=2)
        (q,) = p.pending()
        assert len(q.members) == 2 ** math.floor(math.log2((8 - 2 + 1) / 2))

    def test_d_zero_issues_one_pooled_check(self):
        p = create_planner("gbs", 6, d=0)
        (q,) = p.pending()
        assert q.members == (1, 2, 3, 4, 5, 6)
        p.observe([GroupOutcome(q.query_id, False)])
        assert p.terminal
        assert set(p.negative) == {1, 2, 3, 4, 5, 6}

    def test_d_zero_positive_reraises_search(self):
        p = create_planner("gbs", 6, d=0)
        (q,) = p.pending()
        p.observe([GroupOutcome(q.query_id, True)])
        assert p.failure_events == 1
        assert not p.terminal
        stats = run_ideal(p, {3})
        assert stats["positive"] == {3}

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            create_planner("gbs", 8, d=8)
        with pytest.raises(ConfigError):
            create_planner("gbs", 8)


class TestTraces:
    def test_four_tests_for_one_in_eight(self):
        for infected in range(1, 9):
            stats = run_ideal(create_planner("gbs", 8, d=1), {infected})
            assert stats["tests"] == 4
            assert stats["positive"] == {infected}

    def test_trace_detail_for_sample_five(self):
        trace = ideal_trace(create_planner("gbs", 8, d=1), {5})
        assert trace[0] == ((1, 2, 3, 4, 5, 6, 7, 8), True)
        assert trace[1] == ((1, 2, 3, 4), False)
        assert trace[2] == ((5, 6), True)
        assert trace[3] == ((5,), True)

    def test_all_negative_pool_is_one_test(self):
        stats = run_ideal(create_planner("gbs", 8, d=1), set())
        assert stats["tests"] == 1
        assert stats["negative"] == set(range(1, 9))

    def test_bsp_exact_on_power_of_two(self):
        """A positive group of size 2^k narrows to one infected sample in
        exactly k further tests, wherever it sits."""
        for k in range(1, 7):
            n = 2 ** k
            for infected in range(1, n + 1):
                stats = run_ideal(create_planner("gbs", n, d=1), {infected})
                assert stats["tests"] == 1 + k

    def test_individual_phase_when_pool_small(self):
        # n < 2d-1 goes straight to one-by-one testing
        p = create_planner("gbs", 4, d=3)
        stats = run_ideal(p, {1, 4})
        assert stats["positive"] == {1, 4}
        assert stats["tests"] == 4

    def test_verify_flag_appends_pooled_check(self):
        base = run_ideal(create_planner("gbs", 8, d=1), {5})
        checked = run_ideal(create_planner("gbs", 8, d=1, verify=True), {5})
        assert checked["tests"] == base["tests"] + 1
        assert checked["positive"] == base["positive"] == {5}

    def test_verify_catches_underestimated_allowance(self):
        p = create_planner("gbs", 8, d=1, verify=True)
        stats = run_ideal(p, {2, 7})
        assert stats["positive"] == {2, 7}
        assert stats["failures"] >= 1

    def test_underestimate_without_verify_misses(self):
        stats = run_ideal(create_planner("gbs", 8, d=1), {2, 7})
        assert len(stats["positive"]) == 1
        assert stats["failures"] == 0


class TestExhaustive:
    def test_correct_and_bounded_small(self):
        for n in range(2, 11):
            for d in range(1, min(4, n)):
                bound = math.ceil(gbs_worst_case_bound(n, d))
                for k in range(d + 1):
                    for pattern in combinations(range(1, n + 1), k):
                        stats = run_ideal(create_planner("gbs", n, d=d), set(pattern))
                        assert stats["positive"] == set(pattern)
                        assert stats["tests"] <= bound

    def test_per_sample_queries_single_defective(self):
        for n in (5, 8, 12, 16):
            cap = per_sample_query_bound(n, 1)
            for infected in range(1, n + 1):
                stats = run_ideal(create_planner("gbs", n, d=1), {infected})
                assert max(stats["per_sample"].values()) <= cap


class TestProtocol:
    def test_determinism(self):
        t1 = ideal_trace(create_planner("gbs", 13, d=2), {3, 11})
        t2 = ideal_trace(create_planner("gbs", 13, d=2), {3, 11})
        assert t1 == t2

    def test_single_query_at_a_time(self):
        p = create_planner("gbs", 16, d=2)
        while not p.terminal:
            queries = p.pending()
            assert len(queries) == 1
            p.observe([GroupOutcome(queries[0].query_id, False)])

    def test_outcome_for_unknown_query(self):
        p = create_planner("gbs", 8, d=1)
        with pytest.raises(ProtocolError, match="unknown"):
            p.observe([GroupOutcome(99, True)])

    def test_missing_outcome(self):
        p = create_planner("gbs", 8, d=1)
        with pytest.raises(ProtocolError, match="missing"):
            p.observe([])

    def test_terminal_refuses_next(self):
        p = create_planner("gbs", 2, d=1)
        run_ideal(p, {1})
        with pytest.raises(ProtocolError, match="complete"):
            p.pending()

    def test_serialization_midway(self):
        p = GbsPlanner(list(range(1, 14)), d=2)
        infected = {4, 9}
        for _ in range(3):
            (q,) = p.pending()
            p.observe([GroupOutcome(q.query_id, bool(infected & set(q.members)))])
        clone = planner_from_doc(p.to_doc())
        assert ideal_trace(clone, infected) == ideal_trace(p, infected)
