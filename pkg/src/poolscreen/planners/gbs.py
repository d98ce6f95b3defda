"""Generalized binary splitting: find up to d infected among n samples.

Repeatedly tests a group sized to the current pool/infected ratio; a
positive group is narrowed to one infected sample by halving (the binary
splitting procedure), a negative group is cleared outright.  Once the pool
is small relative to the remaining allowance the leftovers are tested one
by one.
"""

from __future__ import annotations

import math
from typing import Sequence

from ..errors import ConfigError, DomainError
from .base import GroupOutcome, GroupQuery, Planner


def gbs_worst_case_bound(n: int, d: int) -> float:
    """Maximum tests the procedure can need: log2(C(n, d)) + d."""
    if not 0 <= d < n:
        raise DomainError(f"need 0 <= d < n, got d={d} n={n}")
    if d == 0:
        return 0.0
    return math.log2(math.comb(n, d)) + d


def per_sample_query_bound(n: int, d: int) -> int:
    """Portions one sample may consume: floor(log2(n/d)) + 1."""
    if not 1 <= d < n:
        raise DomainError(f"need 1 <= d < n, got d={d} n={n}")
    return math.floor(math.log2(n / d)) + 1


class GbsPlanner(Planner):
    algorithm = "gbs"

    def __init__(self, sample_ids: Sequence[int], d: int, verify: bool = False):
        super().__init__(sample_ids)
        n = len(self.pool)
        if n < 1:
            raise ConfigError("need at least one sample")
        if not 0 <= d < n:
            raise ConfigError(f"GBS needs 0 <= d < n, got d={d} n={n}")
        self.d_remaining = d
        # A d=0 plan has nothing to split; its single pooled test is the
        # only way to back the all-negative claim, so it always runs.
        self.verify_on = verify or d == 0
        self.phase = "group"
        self.bsp_active: list[int] = []
        self.bsp_tested: list[int] = []
        self.bsp_aside: list[int] = []
        self._schedule()

    # -- scheduling ----------------------------------------------------------

    def _schedule(self) -> None:
        if self._pending or not self.pool:
            return
        if self.phase == "bsp":
            self._issue_bsp_half()
            return
        n = len(self.pool)
        d = self.d_remaining
        if d == 0:
            if self.verify_on:
                self.phase = "verify"
                self._issue(self.pool)
            else:
                # Remaining samples are negative by the d-allowance argument.
                self._diagnose_negative(list(self.pool))
            return
        if n >= 2 * d - 1:
            self.phase = "group"
            size = 2 ** math.floor(math.log2((n - d + 1) / d))
            self._issue(self.pool[:min(size, n)])
        else:
            self.phase = "individual"
            self._issue(self.pool[:1])

    def _issue_bsp_half(self) -> None:
        if len(self.bsp_active) == 1:
            self._finish_bsp(self.bsp_active[0])
            self._schedule()
            return
        half = self.bsp_active[:(len(self.bsp_active) + 1) // 2]
        self.bsp_tested = half
        self._issue(half)

    def _finish_bsp(self, infected: int) -> None:
        self._diagnose_positive([infected])
        self.d_remaining -= 1
        # Undetermined set-asides rejoin the pool at the back: they have
        # already been screened once, fresh samples go first.
        aside = set(self.bsp_aside)
        self.pool = [s for s in self.pool if s not in aside] + list(self.bsp_aside)
        self.bsp_active = []
        self.bsp_tested = []
        self.bsp_aside = []
        self.phase = "group"

    # -- outcome handling ------------------------------------------------------

    def _apply(self, answered: list[tuple[GroupQuery, GroupOutcome]]) -> None:
        query, outcome = answered[0]
        members = list(query.members)
        if self.phase == "group":
            if outcome.positive:
                self.phase = "bsp"
                self.bsp_active = members
                self.bsp_aside = []
            else:
                self._diagnose_negative(members)
        elif self.phase == "bsp":
            half = self.bsp_tested
            rest = self.bsp_active[len(half):]
            if outcome.positive:
                self.bsp_aside.extend(rest)
                self.bsp_active = half
            else:
                self._diagnose_negative(half)
                self.bsp_active = rest
            if len(self.bsp_active) == 1:
                self._finish_bsp(self.bsp_active[0])
        elif self.phase == "individual":
            if outcome.positive:
                self._diagnose_positive(members)
                self.d_remaining = max(0, self.d_remaining - 1)
            else:
                self._diagnose_negative(members)
            if self.pool:
                self._issue(self.pool[:1])
            return
        elif self.phase == "verify":
            if outcome.positive:
                # The all-negative claim failed: the allowance was too low.
                self.failure_events += 1
                self.d_remaining = 1
                self.phase = "group"
            else:
                self._diagnose_negative(members)
        self._schedule()

    # -- serialization -----------------------------------------------------------

    def _alg_state_doc(self) -> dict:
        doc = self._common_state_doc()
        doc.update({
            "d_remaining": self.d_remaining,
            "verify_on": self.verify_on,
            "phase": self.phase,
            "bsp_active": list(self.bsp_active),
            "bsp_tested": list(self.bsp_tested),
            "bsp_aside": list(self.bsp_aside),
        })
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "GbsPlanner":
        planner = cls.__new__(cls)
        Planner.__init__(planner, [])
        planner._restore_common(doc)
        state = doc["alg_state"]
        planner.d_remaining = int(state["d_remaining"])
        planner.verify_on = bool(state["verify_on"])
        planner.phase = str(state["phase"])
        planner.bsp_active = list(state["bsp_active"])
        planner.bsp_tested = list(state["bsp_tested"])
        planner.bsp_aside = list(state["bsp_aside"])
        return planner
