"""Nested testing: expected-cost-optimal probabilistic group testing.

Needs only the infection prior, not an infected-count bound, and still
diagnoses every sample.  Group sizes come from a precomputed table of
expected remaining costs: entry (m, n) is the expected tests to finish n
undiagnosed samples of which m form a group known to hold at least one
infected sample.  The table is built once per (alpha, n) and can be
persisted and reused.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ConfigError, ProtocolError
from .. import backend
from .base import GroupOutcome, GroupQuery, Planner

DEFAULT_TABLE_CAP = 256


class CostTable:
    """Expected-cost table G plus the argmin group sizes that achieve it."""

    def __init__(self, alpha: float, g: np.ndarray, choice: np.ndarray):
        self.alpha = alpha
        self.g = g
        self.choice = choice

    @property
    def n_max(self) -> int:
        return self.g.shape[0] - 1

    def expected_tests(self, n: int) -> float:
        if not 0 <= n <= self.n_max:
            raise ConfigError(f"n={n} outside table range 0..{self.n_max}")
        return float(self.g[0][n])

    def group_size(self, pib: int, undiagnosed: int) -> int:
        return int(self.choice[pib][undiagnosed])

    def to_doc(self) -> dict:
        return {"alpha": self.alpha, "n_max": self.n_max,
                "g": self.g.tolist(), "choice": self.choice.tolist()}

    @classmethod
    def from_doc(cls, doc: dict) -> "CostTable":
        return cls(alpha=float(doc["alpha"]),
                   g=np.asarray(doc["g"], dtype=np.float64),
                   choice=np.asarray(doc["choice"], dtype=np.int32))


def build_cost_table(alpha: float, n_max: int, allow_large: bool = False) -> CostTable:
    """Fill the recursion bottom-up for all 0 <= m <= n <= n_max.

    The build is O(n_max^3); sizes beyond 256 need `allow_large` as a
    deliberate opt-in.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(
            f"need 0 < alpha < 1, got {alpha} "
            "(alpha=0 needs one pooled test, alpha=1 needs n individual tests)")
    if n_max < 1:
        raise ConfigError(f"need n_max >= 1, got {n_max}")
    if n_max > DEFAULT_TABLE_CAP and not allow_large:
        raise ConfigError(
            f"n_max={n_max} exceeds the default cap {DEFAULT_TABLE_CAP}; "
            "pass allow_large=True to opt in")
    g, choice = backend.g_table(alpha, n_max)
    return CostTable(alpha=alpha, g=g, choice=choice)


def expected_tests(alpha: float, n: int, table: CostTable | None = None) -> float:
    """Average tests nested testing needs for n samples at prior alpha."""
    if n < 0:
        raise ConfigError(f"need n >= 0, got {n}")
    if alpha == 0.0:
        # Certain all-negative pool: a single pooled test confirms it.
        return 1.0 if n >= 1 else 0.0
    if alpha == 1.0:
        return float(n)
    if table is None:
        table = build_cost_table(alpha, max(n, 1))
    elif table.alpha != alpha:
        raise ConfigError("table was built for a different alpha")
    return table.expected_tests(n)


class NestedPlanner(Planner):
    algorithm = "nt"

    def __init__(self, sample_ids: Sequence[int], alpha: float,
                 table: CostTable | None = None):
        super().__init__(sample_ids)
        n = len(self.pool)
        if n < 1:
            raise ConfigError("need at least one sample")
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"nested testing needs 0 < alpha < 1, got {alpha}")
        self.alpha = alpha
        if table is None:
            table = build_cost_table(alpha, n)
        if table.alpha != alpha or table.n_max < n:
            raise ConfigError("cost table does not cover this run")
        self.table = table
        self.ub: list[int] = list(self.pool)
        self.pib: list[int] = []
        self._mode = "outer"
        self._schedule()

    def _schedule(self) -> None:
        if len(self.pib) == 1:
            # A lone member of a group known infected needs no test.
            self._diagnose_positive(list(self.pib))
            self.pib = []
        if self._pending or (not self.ub and not self.pib):
            return
        if self.pib:
            m = len(self.pib)
            self._mode = "inner"
            size = self.table.group_size(m, m + len(self.ub))
            self._issue(self.pib[:size])
        else:
            self._mode = "outer"
            size = self.table.group_size(0, len(self.ub))
            self._issue(self.ub[:size])

    def _apply(self, answered: list[tuple[GroupQuery, GroupOutcome]]) -> None:
        query, outcome = answered[0]
        members = list(query.members)
        size = len(members)
        if self._mode == "outer":
            self.ub = self.ub[size:]
            if outcome.positive:
                self.pib = members
            else:
                self._diagnose_negative(members)
        else:
            if outcome.positive:
                # Untested remainder of the old suspect group rejoins the
                # undiagnosed queue at the back.
                self.ub = self.ub + self.pib[size:]
                self.pib = members
            else:
                self._diagnose_negative(members)
                self.pib = self.pib[size:]
        self._schedule()

    # -- serialization -----------------------------------------------------------

    def _alg_state_doc(self) -> dict:
        doc = self._common_state_doc()
        doc.update({
            "alpha": self.alpha,
            "table_n_max": self.table.n_max,
            "ub": list(self.ub),
            "pib": list(self.pib),
            "mode": self._mode,
        })
        return doc

    @classmethod
    def from_doc(cls, doc: dict, table: CostTable | None = None) -> "NestedPlanner":
        planner = cls.__new__(cls)
        Planner.__init__(planner, [])
        planner._restore_common(doc)
        state = doc["alg_state"]
        planner.alpha = float(state["alpha"])
        n_max = int(state["table_n_max"])
        if table is not None:
            if table.alpha != planner.alpha or table.n_max < n_max:
                raise ProtocolError("supplied cost table does not match the saved run")
            planner.table = table
        else:
            planner.table = build_cost_table(planner.alpha, n_max)
        planner.ub = list(state["ub"])
        planner.pib = list(state["pib"])
        planner._mode = str(state["mode"])
        return planner
