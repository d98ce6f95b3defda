"""Multi-stage testing: s parallel stages of shrinking groups.

Stage i partitions the still-queued samples into groups of average size
delta^(1-i/s); negative groups are cleared, positive ones carry forward,
and the last stage tests singletons.  Every sample is tested at most s
times, and all groups of one stage can run in parallel.
"""

from __future__ import annotations

import math
from typing import Sequence

from ..errors import ConfigError, DomainError
from .base import GroupOutcome, GroupQuery, Planner

E = math.e


def optimal_stage_count(n: int, d: int) -> int:
    """Stage count minimizing x * d * (n/d)^(1/x) over the two integers
    bracketing ln(n/d); ties break toward fewer stages."""
    if not 1 <= d < n:
        raise DomainError(f"need 1 <= d < n, got d={d} n={n}")
    delta = n / d
    ln = math.log(delta)
    candidates = sorted({max(1, math.floor(ln)), max(1, math.ceil(ln))})
    return min(candidates, key=lambda x: (x * d * delta ** (1.0 / x), x))


def mst_worst_case_bound(n: int, d: int) -> float:
    """Maximum total tests: e * d * ln(n/d)."""
    if not 1 <= d <= n:
        raise DomainError(f"need 1 <= d <= n, got d={d} n={n}")
    return E * d * math.log(n / d)


def inherent_replication_savings(n: int, d: int, s: int) -> float:
    """Tests saved because positive samples re-enter later stages:
    k1 * (1 - d/n) / (1 - (d/n)^(1/s)) with k1 = (n/d)^(1 - 1/s)."""
    if not 1 <= d <= n:
        raise DomainError(f"need 1 <= d <= n, got d={d} n={n}")
    if s < 1:
        raise DomainError(f"need s >= 1, got {s}")
    if d == n:
        return 0.0
    ratio = d / n
    k1 = (n / d) ** (1.0 - 1.0 / s)
    return k1 * (1.0 - ratio) / (1.0 - ratio ** (1.0 / s))


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def partition_sizes(n: int, groups: int) -> list[int]:
    """First n%g groups get ceil(n/g) members, the rest floor(n/g)."""
    big = n % groups
    lo = n // groups
    return [lo + 1] * big + [lo] * (groups - big)


class MstPlanner(Planner):
    algorithm = "mst"

    def __init__(self, sample_ids: Sequence[int], d: int, stages: int | None = None):
        super().__init__(sample_ids)
        n = len(self.pool)
        if not 1 <= d < n:
            raise ConfigError(
                f"MST needs 1 <= d < n (got d={d}, n={n}); "
                "for d=0 use nested testing or a single pooled test")
        if stages is not None and stages < 1:
            raise ConfigError(f"stage count must be >= 1, got {stages}")
        self.plan_n = n
        self.plan_d = d
        self.s = stages if stages is not None else optimal_stage_count(n, d)
        self.stage = 0           # stage whose queries are pending (1-based)
        self.d_remaining = d
        self._start_stage()

    @property
    def delta(self) -> float:
        return self.plan_n / self.plan_d

    def _start_stage(self) -> None:
        self.stage += 1
        n_prev = len(self.pool)
        k = self.delta ** (1.0 - self.stage / self.s)
        groups = min(max(1, _round_half_up(n_prev / k)), n_prev)
        offset = 0
        for size in partition_sizes(n_prev, groups):
            self._issue(self.pool[offset:offset + size])
            offset += size

    def _apply(self, answered: list[tuple[GroupQuery, GroupOutcome]]) -> None:
        positive_groups = 0
        found_now = 0
        for query, outcome in answered:
            members = list(query.members)
            if not outcome.positive:
                self._diagnose_negative(members)
            elif len(members) == 1:
                self._diagnose_positive(members)
                found_now += 1
            else:
                positive_groups += 1  # members stay queued
        self.d_remaining -= found_now
        if self.d_remaining < 0 or positive_groups > max(self.d_remaining, 0):
            # More positives than the allowance can explain: d was too low.
            self.failure_events += 1
            if self.pool:
                self._replan(positive_groups)
                return
        if not self.pool:
            return
        if self.stage >= self.s:
            # Only reachable through inconsistent (noisy) outcomes; finish
            # the stragglers individually rather than stall.
            self.failure_events += 1
            self._replan(max(positive_groups, 1))
            return
        self._start_stage()

    def _replan(self, evidence: int) -> None:
        """Restart on the queued samples with the allowance raised to the
        number of groups known to hold an infected sample."""
        n = len(self.pool)
        d = min(max(evidence, 1), n - 1) if n > 1 else 1
        self.plan_n = n
        self.plan_d = d
        self.d_remaining = d
        if n == 1:
            self.s = 1
        else:
            self.s = optimal_stage_count(n, d)
        self.stage = 0
        self._start_stage()

    # -- serialization -----------------------------------------------------------

    def _alg_state_doc(self) -> dict:
        doc = self._common_state_doc()
        doc.update({
            "plan_n": self.plan_n,
            "plan_d": self.plan_d,
            "s": self.s,
            "stage": self.stage,
            "d_remaining": self.d_remaining,
        })
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "MstPlanner":
        planner = cls.__new__(cls)
        Planner.__init__(planner, [])
        planner._restore_common(doc)
        state = doc["alg_state"]
        planner.plan_n = int(state["plan_n"])
        planner.plan_d = int(state["plan_d"])
        planner.s = int(state["s"])
        planner.stage = int(state["stage"])
        planner.d_remaining = int(state["d_remaining"])
        return planner
