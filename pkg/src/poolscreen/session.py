"""Live-run engine: replication expansion, portion budgeting, audit log.

A session wraps one planner run for human operators: planner queries are
expanded into physical replicate reads per the replication policy, every
read a sample participates in is charged against its portion budget, and
every issued query and reported outcome is appended to a replayable event
log.  Loading a saved session replays that log and must land on the exact
same state; any mismatch between the log and the regenerated plan is a
load error naming the first bad event.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import ConfigError, ProtocolError, SessionLoadError
from .planners import GroupOutcome, GroupQuery, Planner, create_planner, optimal_stage_count
from .planners.gbs import per_sample_query_bound
from .testmodel import ReplicationPolicy, TestKitProfile

SESSION_DOC_VERSION = 1


@dataclass(frozen=True)
class SessionConfig:
    algorithm: str
    n: int
    d: int | None = None
    alpha: float | None = None
    stages: int | None = None
    verify: bool = False
    profile: TestKitProfile | None = None
    replication: ReplicationPolicy = field(
        default_factory=lambda: ReplicationPolicy(2, "negatives-only"))
    portion_budget_per_sample: int = 0  # 0 = derive from the plan requirement
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.labels is not None:
            if len(self.labels) != self.n:
                raise ConfigError(f"got {len(self.labels)} labels for n={self.n}")
            if len(set(self.labels)) != len(self.labels):
                raise ConfigError("labels must be unique")
        if self.portion_budget_per_sample < 0:
            raise ConfigError("portion budget must be >= 1 (or 0 to derive)")

    def budget(self) -> int:
        if self.portion_budget_per_sample:
            return self.portion_budget_per_sample
        derived = portion_requirement(self)
        return derived if derived is not None else max(self.n, 2)

    def label_of(self, sample_id: int) -> str:
        if self.labels is not None:
            return self.labels[sample_id - 1]
        return f"sample {sample_id}"

    def to_doc(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "n": self.n,
            "d": self.d,
            "alpha": self.alpha,
            "stages": self.stages,
            "verify": self.verify,
            "profile": self.profile.to_doc() if self.profile else None,
            "replication": self.replication.to_doc(),
            "portion_budget_per_sample": self.portion_budget_per_sample,
            "labels": list(self.labels) if self.labels is not None else None,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "SessionConfig":
        return cls(
            algorithm=doc["algorithm"],
            n=int(doc["n"]),
            d=None if doc.get("d") is None else int(doc["d"]),
            alpha=None if doc.get("alpha") is None else float(doc["alpha"]),
            stages=None if doc.get("stages") is None else int(doc["stages"]),
            verify=bool(doc.get("verify", False)),
            profile=TestKitProfile.from_doc(doc["profile"]) if doc.get("profile") else None,
            replication=ReplicationPolicy.from_doc(doc["replication"]),
            portion_budget_per_sample=int(doc.get("portion_budget_per_sample", 0)),
            labels=tuple(doc["labels"]) if doc.get("labels") else None,
        )


def portion_requirement(config: SessionConfig) -> int | None:
    """Per-sample portions the plan may need, or None when unbounded (NT).

    MST needs one portion per stage.  GBS with d <= 1 has the exact
    splitting-depth bound; with d >= 2 samples set aside during a split can
    re-enter later splits, so a proven-conservative count is used there.
    Runtime accounting enforces the real budget either way.
    """
    r = config.replication.r if config.replication.mode != "none" else 1
    if config.algorithm == "mst":
        stages = config.stages if config.stages is not None else \
            optimal_stage_count(config.n, config.d)
        return stages * r
    if config.algorithm == "gbs":
        if config.d == 0:
            return r
        if config.d == 1:
            return per_sample_query_bound(config.n, 1) * r
        per_chain = math.floor(math.log2(config.n)) + 1
        return min(config.n, config.d * per_chain + 1) * r
    return None


class PortionLedger:
    """Counts every physical read each sample takes part in."""

    def __init__(self, budget: int | None):
        self.budget = budget
        self.used: dict[int, int] = {}

    def fits(self, members) -> bool:
        if self.budget is None:
            return True
        return all(self.used.get(s, 0) < self.budget for s in members)

    def consume(self, members) -> None:
        for s in members:
            self.used[s] = self.used.get(s, 0) + 1

    def limiting_sample(self, members) -> int | None:
        if self.budget is None:
            return None
        for s in members:
            if self.used.get(s, 0) >= self.budget:
                return s
        return None


class BudgetExhausted(ProtocolError):
    def __init__(self, sample_id: int):
        super().__init__(f"portion budget exhausted for sample {sample_id}")
        self.sample_id = sample_id


class _Slot:
    """One logical planner query and the physical reads backing it."""

    def __init__(self, logical: GroupQuery, planned_reads: int):
        self.logical = logical
        self.planned_reads = planned_reads
        self.reads: list[bool] = []
        self.issued = 0
        self.budget_limited = False

    def decide(self) -> bool:
        positives = sum(1 for r in self.reads if r)
        return positives >= (len(self.reads) + 1) // 2


class ReplicationBridge:
    """Maps planner queries to physical reads and folds outcomes back.

    Physical reads get their own id space; outcomes must answer the whole
    currently pending physical batch.  Under "negatives-only" a first read
    that comes back negative asks for its confirmation reads before the
    planner sees a decision.  Once every read of every open slot is in,
    each slot's majority decision feeds the planner.
    """

    def __init__(self, planner: Planner, policy: ReplicationPolicy,
                 ledger: PortionLedger | None = None):
        self.planner = planner
        self.policy = policy
        self.ledger = ledger if ledger is not None else PortionLedger(None)
        self.slots: dict[int, _Slot] = {}
        self.physical: dict[int, int] = {}   # physical id -> logical id
        self.pending_physical: list[GroupQuery] = []
        self._next_pid = 1
        self.physical_tests = 0
        self.incidences = 0
        self.budget_events: list[dict] = []
        self.on_issue = None   # callback(GroupQuery) for audit logging
        self._refill()

    @property
    def done(self) -> bool:
        return self.planner.terminal and not self.pending_physical

    def pending(self) -> list[GroupQuery]:
        return list(self.pending_physical)

    def slot_of(self, pid: int) -> _Slot:
        return self.slots[self.physical[pid]]

    def _refill(self) -> None:
        if self.planner.terminal:
            return
        for logical in self.planner.pending():
            if logical.query_id in self.slots:
                continue
            reads = self.policy.r if self.policy.mode == "all" else 1
            slot = _Slot(logical, planned_reads=reads)
            self.slots[logical.query_id] = slot
            for i in range(reads):
                self._issue_read(slot, i + 1)

    def _issue_read(self, slot: _Slot, replicate_index: int) -> None:
        members = slot.logical.members
        if not self.ledger.fits(members):
            if slot.issued == 0:
                raise BudgetExhausted(self.ledger.limiting_sample(members))
            # Confirmation read dropped; the decision rests on the reads
            # that fit.  Surfaced to the operator, never silently skipped.
            slot.budget_limited = True
            slot.planned_reads = slot.issued
            self.budget_events.append({
                "logical_query": slot.logical.query_id,
                "sample": self.ledger.limiting_sample(members)})
            return
        q = GroupQuery(query_id=self._next_pid, members=members,
                       replicate_index=replicate_index)
        self._next_pid += 1
        self.ledger.consume(members)
        self.physical[q.query_id] = slot.logical.query_id
        self.pending_physical.append(q)
        self.physical_tests += 1
        self.incidences += len(members)
        slot.issued += 1
        if self.on_issue:
            self.on_issue(q)

    def report(self, outcomes: list[GroupOutcome]) -> None:
        open_ids = {q.query_id for q in self.pending_physical}
        got = [o.query_id for o in outcomes]
        if len(set(got)) != len(got):
            raise ProtocolError("duplicate outcome for one physical query")
        unknown = set(got) - open_ids
        if unknown:
            raise ProtocolError(
                f"outcome for unknown or already answered query id {sorted(unknown)}")
        missing = open_ids - set(got)
        if missing:
            raise ProtocolError(f"missing outcomes for query id {sorted(missing)}")
        for o in outcomes:
            self.slot_of(o.query_id).reads.append(o.positive)
        self.pending_physical = []
        if self.policy.mode == "negatives-only" and self.policy.r > 1:
            for slot in self.slots.values():
                if (slot.planned_reads == 1 and slot.issued == 1
                        and slot.reads == [False]):
                    slot.planned_reads = self.policy.r
                    for i in range(self.policy.r - 1):
                        self._issue_read(slot, slot.issued + 1)
        if self.pending_physical:
            return
        decided = [GroupOutcome(qid, slot.decide())
                   for qid, slot in sorted(self.slots.items())]
        self.slots.clear()
        self.physical.clear()
        self.planner.observe(decided)
        self._refill()


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


class Session:
    """A persistent, resumable run of one plan."""

    def __init__(self, config: SessionConfig, session_id: str,
                 created_at: str | None = None, _log_initial: bool = True):
        self.config = config
        self.session_id = session_id
        self.created_at = created_at or _utcnow()
        self.events: list[dict] = []
        self.status = "active"
        self.abort_reason: str | None = None
        self._seq = 0
        self._issue_buffer: list[GroupQuery] = []
        planner = create_planner(config.algorithm, config.n, d=config.d,
                                 alpha=config.alpha, stages=config.stages,
                                 verify=config.verify)
        ledger = PortionLedger(config.budget())
        try:
            self.bridge = ReplicationBridge(planner, config.replication, ledger)
        except BudgetExhausted as exc:
            raise ConfigError(
                f"portion budget {config.budget()} cannot cover the initial "
                f"queries; limiting sample: {config.label_of(exc.sample_id)}"
            ) from exc
        self.bridge.on_issue = lambda q: self._issue_buffer.append(q)
        self._issue_buffer.extend(self.bridge.pending())
        if _log_initial:
            stamp = self.created_at
            for q in self._drain_issued():
                self._append_event({"kind": "query", "query": q.to_doc(), "at": stamp})

    # -- creation --------------------------------------------------------------

    @classmethod
    def create(cls, config: SessionConfig) -> "Session":
        req = portion_requirement(config)
        if req is not None and config.budget() < req:
            raise ConfigError(
                f"portion budget {config.budget()} is below the per-sample "
                f"requirement {req} of this plan")
        return cls(config, session_id=secrets.token_hex(16))

    # -- protocol ----------------------------------------------------------------

    @property
    def planner(self) -> Planner:
        return self.bridge.planner

    def pending(self) -> list[GroupQuery]:
        if self.status != "active":
            return []
        return self.bridge.pending()

    def pending_flags(self) -> dict[int, bool]:
        return {q.query_id: self.bridge.slot_of(q.query_id).budget_limited
                for q in self.pending()}

    def report_outcomes(self, outcomes: list[GroupOutcome],
                        at: str | None = None) -> None:
        if self.status != "active":
            raise ProtocolError(f"session is {self.status}, not active")
        stamp = at or _utcnow()
        aborted = None
        try:
            self.bridge.report(outcomes)
        except BudgetExhausted as exc:
            aborted = exc
        for o in outcomes:
            self._append_event({"kind": "outcome", "outcome": o.to_doc(), "at": stamp})
        for q in self._drain_issued():
            self._append_event({"kind": "query", "query": q.to_doc(), "at": stamp})
        if aborted is not None:
            self.status = "aborted"
            self.abort_reason = str(aborted)
        elif self.bridge.done:
            self.status = "complete"

    def abort(self, reason: str) -> None:
        if self.status != "active":
            raise ProtocolError(f"session is {self.status}, not active")
        self.status = "aborted"
        self.abort_reason = reason

    def diagnoses(self) -> dict:
        p = self.planner
        return {"positive": sorted(p.positive), "negative": sorted(p.negative),
                "undiagnosed": sorted(p.pool)}

    def portions_used(self) -> dict[int, int]:
        return dict(self.bridge.ledger.used)

    def _drain_issued(self) -> list[GroupQuery]:
        out, self._issue_buffer = self._issue_buffer, []
        return out

    def _append_event(self, event: dict) -> None:
        self._seq += 1
        self.events.append({"seq": self._seq, **event})

    # -- persistence ----------------------------------------------------------------

    def state_digest(self) -> str:
        body = json.dumps({
            "status": self.status,
            "abort_reason": self.abort_reason,
            "planner": self.planner.to_doc(),
            "portions": {str(k): v for k, v in sorted(self.bridge.ledger.used.items())},
            "pending": [q.to_doc() for q in self.bridge.pending()],
        }, sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()

    def to_doc(self) -> dict:
        return {
            "version": SESSION_DOC_VERSION,
            "session_id": self.session_id,
            "created_at": self.created_at,
            "config": self.config.to_doc(),
            "events": self.events,
            "digest": self.state_digest(),
        }

    def save(self, path: str) -> None:
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.to_doc(), fh, indent=1)
            fh.write("\n")
        os.replace(tmp, path)

    @classmethod
    def from_doc(cls, doc: dict) -> "Session":
        if doc.get("version") != SESSION_DOC_VERSION:
            raise SessionLoadError(f"unsupported session version {doc.get('version')!r}")
        try:
            config = SessionConfig.from_doc(doc["config"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SessionLoadError(f"invalid config: {exc}") from exc
        session = cls(config, session_id=str(doc["session_id"]),
                      created_at=doc.get("created_at"), _log_initial=False)
        session._replay(doc.get("events", []))
        digest = doc.get("digest")
        if digest is not None and digest != session.state_digest():
            raise SessionLoadError(
                "replay divergence: event log replays to a different state "
                "than the one saved (log or outcomes were altered)")
        return session

    @classmethod
    def load(cls, path: str) -> "Session":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SessionLoadError(f"cannot read session file: {exc}") from exc
        return cls.from_doc(doc)

    def _replay(self, events: list[dict]) -> None:
        batch: list[GroupOutcome] = []

        def flush(seq: int) -> None:
            nonlocal batch
            if not batch:
                return
            try:
                self.bridge.report(batch)
            except BudgetExhausted as exc:
                self.status = "aborted"
                self.abort_reason = str(exc)
            except ProtocolError as exc:
                raise SessionLoadError(f"replay divergence at event seq {seq}: {exc}") from exc
            batch = []

        for i, event in enumerate(events):
            seq = event.get("seq")
            if seq != i + 1:
                raise SessionLoadError(f"event log gap: expected seq {i + 1}, found {seq!r}")
            kind = event.get("kind")
            if kind == "query":
                flush(seq)
                if not self._issue_buffer:
                    raise SessionLoadError(
                        f"replay divergence at event seq {seq}: log holds a query "
                        "the plan does not issue")
                issued = self._issue_buffer.pop(0)
                if issued.to_doc() != event["query"]:
                    raise SessionLoadError(
                        f"replay divergence at event seq {seq}: logged query does "
                        "not match the plan's next query")
            elif kind == "outcome":
                try:
                    batch.append(GroupOutcome.from_doc(event["outcome"]))
                except (KeyError, TypeError, ValueError) as exc:
                    raise SessionLoadError(f"invalid outcome at event seq {seq}: {exc}") from exc
            else:
                raise SessionLoadError(f"unknown event kind {kind!r} at seq {seq}")
            self.events.append(dict(event))
            self._seq = seq
        flush(self._seq)
        if self._issue_buffer:
            raise SessionLoadError(
                "event log is truncated: the plan issued queries the log does not record")
        if self.status == "active" and self.bridge.done:
            self.status = "complete"
