"""Adaptive group-test planners and their analytic bounds."""

from typing import Sequence

from ..errors import ConfigError
from .base import GroupOutcome, GroupQuery, Planner
from .gbs import GbsPlanner, gbs_worst_case_bound, per_sample_query_bound
from .mst import (MstPlanner, inherent_replication_savings, mst_worst_case_bound,
                  optimal_stage_count, partition_sizes)
from .nested import (CostTable, NestedPlanner, build_cost_table, expected_tests,
                     DEFAULT_TABLE_CAP)

ALGORITHMS = ("gbs", "mst", "nt")


def create_planner(algorithm: str, n: int, d: int | None = None,
                   alpha: float | None = None, stages: int | None = None,
                   sample_ids: Sequence[int] | None = None,
                   verify: bool = False,
                   table: CostTable | None = None) -> Planner:
    """Build a planner over samples 1..n (or the given ids)."""
    if sample_ids is None:
        sample_ids = list(range(1, n + 1))
    elif len(sample_ids) != n:
        raise ConfigError(f"got {len(sample_ids)} sample ids for n={n}")
    if algorithm == "gbs":
        if d is None:
            raise ConfigError("gbs needs the infected-count bound d")
        return GbsPlanner(sample_ids, d=d, verify=verify)
    if algorithm == "mst":
        if d is None:
            raise ConfigError("mst needs the infected-count bound d")
        return MstPlanner(sample_ids, d=d, stages=stages)
    if algorithm == "nt":
        if alpha is None:
            raise ConfigError("nt needs the infection prior alpha")
        return NestedPlanner(sample_ids, alpha=alpha, table=table)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def planner_from_doc(doc: dict, table: CostTable | None = None) -> Planner:
    """Rehydrate a serialized planner state document."""
    algorithm = doc.get("algorithm")
    if algorithm == "gbs":
        return GbsPlanner.from_doc(doc)
    if algorithm == "mst":
        return MstPlanner.from_doc(doc)
    if algorithm == "nt":
        return NestedPlanner.from_doc(doc, table=table)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


__all__ = [
    "ALGORITHMS", "CostTable", "DEFAULT_TABLE_CAP", "GbsPlanner", "GroupOutcome",
    "GroupQuery", "MstPlanner", "NestedPlanner", "Planner", "build_cost_table",
    "create_planner", "expected_tests", "gbs_worst_case_bound",
    "inherent_replication_savings", "mst_worst_case_bound",
    "optimal_stage_count", "partition_sizes", "per_sample_query_bound",
    "planner_from_doc",
]
