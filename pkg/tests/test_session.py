"""Session engine: replication, portion budgets, audit log, replay."""

import json

import pytest

from poolscreen.errors import ConfigError, ProtocolError, SessionLoadError
from poolscreen.planners import GroupOutcome, create_planner
from poolscreen.session import (PortionLedger, ReplicationBridge, Session,
                                SessionConfig, portion_requirement)
from poolscreen.testmodel import ReplicationPolicy


def drive(session, infected):
    infected = set(infected)
    while session.status == "active":
        outs = [GroupOutcome(q.query_id, bool(infected & set(q.members)))
                for q in session.pending()]
        session.report_outcomes(outs)
    return session


def cfg(**kw):
    defaults = dict(algorithm="mst", n=16, d=1,
                    replication=ReplicationPolicy(1, "none"),
                    portion_budget_per_sample=0)
    defaults.update(kw)
    return SessionConfig(**defaults)


class TestCreate:
    def test_mst_created_with_matching_budget(self):
        c = cfg(replication=ReplicationPolicy(2, "negatives-only"),
                portion_budget_per_sample=6)
        s = Session.create(c)
        assert s.status == "active"
        assert all(v == 1 for v in s.portions_used().values())

    def test_gbs_budget_too_small(self):
        with pytest.raises(ConfigError, match="requirement"):
            Session.create(cfg(algorithm="gbs", n=8, d=1,
                               portion_budget_per_sample=1))

    def test_nt_small_budget_allowed(self):
        s = Session.create(cfg(algorithm="nt", n=4, d=None, alpha=0.1,
                               portion_budget_per_sample=3))
        assert s.status == "active"

    def test_requirements(self):
        assert portion_requirement(cfg(algorithm="gbs", n=8, d=1)) == 4
        assert portion_requirement(cfg(algorithm="mst", n=16, d=1)) == 3
        assert portion_requirement(cfg(algorithm="mst", n=16, d=1,
                                       replication=ReplicationPolicy(2, "all"))) == 6
        assert portion_requirement(cfg(algorithm="nt", d=None, alpha=0.1)) is None

    def test_labels_checked(self):
        with pytest.raises(ConfigError):
            cfg(labels=("a", "b"))
        with pytest.raises(ConfigError):
            cfg(n=2, labels=("a", "a"))

    def test_session_ids_are_distinct(self):
        a, b = Session.create(cfg()), Session.create(cfg())
        assert a.session_id != b.session_id
        assert len(a.session_id) == 32


class TestReplication:
    def test_mode_none_equals_bare_planner(self):
        s = drive(Session.create(cfg()), {7})
        bare = create_planner("mst", 16, d=1)
        seen = []
        while not bare.terminal:
            qs = bare.pending()
            seen.extend(qs)
            bare.observe([GroupOutcome(q.query_id, 7 in q.members) for q in qs])
        logged = [e["query"] for e in s.events if e["kind"] == "query"]
        assert [q.to_doc() for q in seen] == logged
        assert s.bridge.physical_tests == bare.tests_done

    def test_negatives_only_confirms_negative_first_reads(self):
        s = Session.create(cfg(algorithm="gbs", n=8, d=1,
                               replication=ReplicationPolicy(2, "negatives-only"),
                               portion_budget_per_sample=8))
        (q,) = s.pending()
        s.report_outcomes([GroupOutcome(q.query_id, False)])
        (confirm,) = s.pending()
        assert confirm.members == q.members
        assert confirm.replicate_index == 2
        s.report_outcomes([GroupOutcome(confirm.query_id, False)])
        assert s.status == "complete"
        assert len(s.diagnoses()["negative"]) == 8

    def test_negatives_only_positive_read_passes_through(self):
        s = Session.create(cfg(algorithm="gbs", n=8, d=1,
                               replication=ReplicationPolicy(2, "negatives-only"),
                               portion_budget_per_sample=8))
        (q,) = s.pending()
        s.report_outcomes([GroupOutcome(q.query_id, True)])
        (q2,) = s.pending()
        assert q2.replicate_index == 1
        assert len(q2.members) == 4  # splitting already started

    def test_conflicting_replicates_resolve_positive(self):
        s = Session.create(cfg(algorithm="gbs", n=4, d=1,
                               replication=ReplicationPolicy(2, "negatives-only"),
                               portion_budget_per_sample=8))
        (q,) = s.pending()
        s.report_outcomes([GroupOutcome(q.query_id, False)])
        (confirm,) = s.pending()
        s.report_outcomes([GroupOutcome(confirm.query_id, True)])
        # tie resolves positive, so the planner went into splitting
        assert len(s.pending()[0].members) < 4

    def test_mode_all_expands_stage_up_front(self):
        s = Session.create(cfg(replication=ReplicationPolicy(3, "all"),
                               portion_budget_per_sample=9))
        batch = s.pending()
        assert len(batch) == 9  # 3 stage groups x 3 replicates
        by_members = {}
        for q in batch:
            by_members.setdefault(q.members, []).append(q.replicate_index)
        assert all(sorted(v) == [1, 2, 3] for v in by_members.values())

    def test_majority_consistency(self):
        s = Session.create(cfg(replication=ReplicationPolicy(3, "all"),
                               portion_budget_per_sample=9))
        batch = s.pending()
        outs = []
        for q in batch:
            if 7 in q.members:
                outs.append(GroupOutcome(q.query_id, q.replicate_index != 2))
            else:
                outs.append(GroupOutcome(q.query_id, False))
        s.report_outcomes(outs)
        # 2-of-3 positive reads kept sample 7's stage group alive
        alive = {m for q in s.pending() for m in q.members}
        assert alive == {7, 8, 9, 10, 11}


class TestBudget:
    def test_runtime_budget_abort_names_sample(self):
        # low prior -> pooled first group; narrowing it needs second portions
        s = Session.create(cfg(algorithm="nt", n=4, d=None, alpha=0.15,
                               portion_budget_per_sample=1))
        assert len(s.pending()[0].members) >= 2
        infected = {1, 3}
        while s.status == "active":
            outs = [GroupOutcome(q.query_id, bool(infected & set(q.members)))
                    for q in s.pending()]
            s.report_outcomes(outs)
        assert s.status == "aborted"
        assert "budget exhausted" in s.abort_reason

    def test_budget_safety_invariant(self):
        budget = 3
        s = Session.create(cfg(algorithm="nt", n=8, d=None, alpha=0.3,
                               portion_budget_per_sample=budget))
        drive(s, {2, 5})
        assert all(v <= budget for v in s.portions_used().values())

    def test_confirmation_read_dropped_when_budget_tight(self):
        # all-negative run: every confirmation read would need a second
        # portion that does not exist, so decisions stand on single reads
        s = Session.create(cfg(algorithm="nt", n=4, d=None, alpha=0.15,
                               replication=ReplicationPolicy(2, "negatives-only"),
                               portion_budget_per_sample=1))
        while s.status == "active":
            s.report_outcomes([GroupOutcome(q.query_id, False) for q in s.pending()])
        assert s.status == "complete"
        assert s.bridge.budget_events
        assert len(s.diagnoses()["negative"]) == 4
        assert all(v <= 1 for v in s.portions_used().values())


class TestEventLog:
    def test_roundtrip_bytes(self, tmp_path):
        s = drive(Session.create(cfg()), {7})
        path = tmp_path / "s.json"
        s.save(str(path))
        clone = Session.load(str(path))
        clone.save(str(path) + ".2")
        assert path.read_bytes() == (tmp_path / "s.json.2").read_bytes()

    def test_mid_run_resume_produces_same_queries(self, tmp_path):
        s = Session.create(cfg())
        outs = [GroupOutcome(q.query_id, 7 in q.members) for q in s.pending()]
        s.report_outcomes(outs)
        path = tmp_path / "mid.json"
        s.save(str(path))
        clone = Session.load(str(path))
        assert [q.to_doc() for q in clone.pending()] == \
            [q.to_doc() for q in s.pending()]
        drive(clone, {7})
        assert clone.diagnoses()["positive"] == [7]

    def test_tampered_outcome_detected(self, tmp_path):
        s = drive(Session.create(cfg()), {7})
        path = tmp_path / "s.json"
        s.save(str(path))
        text = path.read_text().replace('"positive": true', '"positive": false', 1)
        path.write_text(text)
        with pytest.raises(SessionLoadError, match="divergence"):
            Session.load(str(path))

    def test_version_gate(self, tmp_path):
        s = Session.create(cfg())
        doc = s.to_doc()
        doc["version"] = 99
        path = tmp_path / "v.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(SessionLoadError, match="version"):
            Session.load(str(path))

    def test_load_of_complete_session_is_readonly_record(self, tmp_path):
        s = drive(Session.create(cfg()), {7})
        path = tmp_path / "done.json"
        s.save(str(path))
        clone = Session.load(str(path))
        assert clone.status == "complete"
        assert clone.diagnoses()["positive"] == [7]
        assert clone.pending() == []
        with pytest.raises(ProtocolError):
            clone.report_outcomes([])


class TestOutcomeProtocol:
    def test_unknown_query_id(self):
        s = Session.create(cfg())
        with pytest.raises(ProtocolError, match="unknown"):
            s.report_outcomes([GroupOutcome(999, True)])

    def test_duplicate_outcome(self):
        s = Session.create(cfg())
        q = s.pending()[0]
        with pytest.raises(ProtocolError, match="duplicate"):
            s.report_outcomes([GroupOutcome(q.query_id, True),
                               GroupOutcome(q.query_id, False)])

    def test_answered_query_rejected_later(self):
        s = Session.create(cfg())
        batch = s.pending()
        s.report_outcomes([GroupOutcome(q.query_id, 7 in q.members) for q in batch])
        assert s.status == "active"
        with pytest.raises(ProtocolError, match="unknown or already answered"):
            s.report_outcomes([GroupOutcome(batch[0].query_id, True)])

    def test_state_unchanged_after_protocol_error(self):
        s = Session.create(cfg())
        before = s.state_digest()
        with pytest.raises(ProtocolError):
            s.report_outcomes([GroupOutcome(999, True)])
        assert s.state_digest() == before


class TestBridgeStandalone:
    def test_ledger_counts_members(self):
        planner = create_planner("gbs", 8, d=1)
        ledger = PortionLedger(None)
        bridge = ReplicationBridge(planner, ReplicationPolicy(1, "none"), ledger)
        bridge.report([GroupOutcome(bridge.pending()[0].query_id, False)])
        assert bridge.done
        assert all(v == 1 for v in ledger.used.values())
        assert bridge.incidences == 8
