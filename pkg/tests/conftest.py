import pytest

from poolscreen.planners import GroupOutcome


def run_ideal(planner, infected):
    """Drive a planner to completion with a perfect test; returns stats."""
    infected = set(infected)
    tests = 0
    per_sample = {}
    while not planner.terminal:
        outcomes = []
        for q in planner.pending():
            tests += 1
            for s in q.members:
                per_sample[s] = per_sample.get(s, 0) + 1
            outcomes.append(GroupOutcome(q.query_id, bool(infected & set(q.members))))
        planner.observe(outcomes)
    return {
        "tests": tests,
        "positive": set(planner.positive),
        "negative": set(planner.negative),
        "per_sample": per_sample,
        "failures": planner.failure_events,
    }


def ideal_trace(planner, infected):
    """Query-by-query trace: list of (members tuple, outcome bool)."""
    infected = set(infected)
    trace = []
    while not planner.terminal:
        outcomes = []
        for q in planner.pending():
            positive = bool(infected & set(q.members))
            trace.append((q.members, positive))
            outcomes.append(GroupOutcome(q.query_id, positive))
        planner.observe(outcomes)
    return trace


@pytest.fixture
def tmp_data_dir(tmp_path):
    d = tmp_path / "gt-data"
    d.mkdir()
    return str(d)
