"""Shared planner contract: queries, outcomes, and the resumable state shape.

A planner is a deterministic state machine.  `pending()` lists every group
query that can be answered right now; `observe()` consumes outcomes for
exactly those queries and schedules the next ones.  Identical inputs and
outcome sequences always reproduce the identical query sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import ConfigError, ProtocolError

STATE_DOC_VERSION = 1


@dataclass(frozen=True)
class GroupQuery:
    """A requested pooled test of `members` (one physical read)."""

    query_id: int
    members: tuple[int, ...]
    replicate_index: int = 1

    def __post_init__(self):
        if not self.members:
            raise ConfigError("a group query needs at least one member")
        if len(set(self.members)) != len(self.members):
            raise ConfigError("group members must be distinct")

    def to_doc(self) -> dict:
        return {"query_id": self.query_id, "members": list(self.members),
                "replicate_index": self.replicate_index}

    @classmethod
    def from_doc(cls, doc: dict) -> "GroupQuery":
        return cls(query_id=int(doc["query_id"]),
                   members=tuple(doc["members"]),
                   replicate_index=int(doc.get("replicate_index", 1)))


@dataclass(frozen=True)
class GroupOutcome:
    """Observed binary result of one issued query."""

    query_id: int
    positive: bool

    def to_doc(self) -> dict:
        return {"query_id": self.query_id, "positive": self.positive}

    @classmethod
    def from_doc(cls, doc: dict) -> "GroupOutcome":
        return cls(query_id=int(doc["query_id"]), positive=bool(doc["positive"]))


class Planner:
    """Base for the adaptive planners; owns bins and the query ledger."""

    algorithm = "?"

    def __init__(self, sample_ids: Sequence[int]):
        ids = list(sample_ids)
        if len(set(ids)) != len(ids):
            raise ConfigError("sample ids must be distinct")
        self.pool: list[int] = ids          # undiagnosed, in working order
        self.positive: list[int] = []
        self.negative: list[int] = []
        self._pending: list[GroupQuery] = []
        self._next_query_id = 1
        self.tests_done = 0
        self.failure_events = 0             # bad-D detections (verify/replan)

    # -- public protocol ---------------------------------------------------

    @property
    def terminal(self) -> bool:
        return not self.pool and not self._pending

    def pending(self) -> list[GroupQuery]:
        if self.terminal:
            raise ProtocolError("planner run is complete; no further queries")
        return list(self._pending)

    def observe(self, outcomes: Sequence[GroupOutcome]) -> "Planner":
        """Consume outcomes for exactly the pending queries and advance."""
        expected = {q.query_id for q in self._pending}
        got = [o.query_id for o in outcomes]
        if len(set(got)) != len(got):
            raise ProtocolError("duplicate outcome for one query")
        unknown = set(got) - expected
        if unknown:
            raise ProtocolError(f"outcome for unknown or answered query id {sorted(unknown)}")
        missing = expected - set(got)
        if missing:
            raise ProtocolError(f"missing outcomes for query id {sorted(missing)}")
        by_id = {o.query_id: o for o in outcomes}
        answered = [(q, by_id[q.query_id]) for q in self._pending]
        self._pending = []
        self.tests_done += len(answered)
        self._apply(answered)
        return self

    def undiagnosed(self) -> list[int]:
        return list(self.pool)

    # -- subclass hooks ----------------------------------------------------

    def _apply(self, answered: list[tuple[GroupQuery, GroupOutcome]]) -> None:
        raise NotImplementedError

    # -- helpers -----------------------------------------------------------

    def _issue(self, members: Sequence[int]) -> GroupQuery:
        q = GroupQuery(query_id=self._next_query_id, members=tuple(members))
        self._next_query_id += 1
        self._pending.append(q)
        return q

    def _diagnose_negative(self, members: Sequence[int]) -> None:
        gone = set(members)
        self.negative.extend(members)
        self.pool = [s for s in self.pool if s not in gone]

    def _diagnose_positive(self, members: Sequence[int]) -> None:
        gone = set(members)
        self.positive.extend(members)
        self.pool = [s for s in self.pool if s not in gone]

    # -- serialization ------------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "version": STATE_DOC_VERSION,
            "algorithm": self.algorithm,
            "bins": {"undiagnosed": list(self.pool),
                     "positive": list(self.positive),
                     "negative": list(self.negative)},
            "pending": [q.to_doc() for q in self._pending],
            "alg_state": self._alg_state_doc(),
        }

    def _alg_state_doc(self) -> dict:
        raise NotImplementedError

    def _restore_common(self, doc: dict) -> None:
        bins = doc["bins"]
        self.pool = list(bins["undiagnosed"])
        self.positive = list(bins["positive"])
        self.negative = list(bins["negative"])
        self._pending = [GroupQuery.from_doc(d) for d in doc["pending"]]
        state = doc["alg_state"]
        self._next_query_id = int(state["next_query_id"])
        self.tests_done = int(state["tests_done"])
        self.failure_events = int(state["failure_events"])

    def _common_state_doc(self) -> dict:
        return {"next_query_id": self._next_query_id,
                "tests_done": self.tests_done,
                "failure_events": self.failure_events}
