"""HTTP API: session lifecycle, ETag concurrency, calculators."""

import json
import threading
import urllib.error
import urllib.request

import pytest

from poolscreen.service import make_server
from poolscreen.session import Session


@pytest.fixture
def api(tmp_data_dir):
    server = make_server("127.0.0.1:0", tmp_data_dir)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"

    def call(method, path, body=None, headers=None):
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(base + path, data=data, method=method,
                                     headers=headers or {})
        try:
            with urllib.request.urlopen(req) as resp:
                return resp.status, json.loads(resp.read()), dict(resp.headers)
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read()), dict(err.headers)

    call.data_dir = tmp_data_dir
    yield call
    server.shutdown()
    server.server_close()


MST_CONFIG = {"algorithm": "mst", "n": 16, "d": 1,
              "replication": {"r": 1, "mode": "none"}}


class TestCreate:
    def test_created_with_initial_queries(self, api):
        status, doc, headers = api("POST", "/v1/sessions", MST_CONFIG)
        assert status == 201
        assert [q["members"] for q in doc["pending"]] == \
            [[1, 2, 3, 4, 5, 6], [7, 8, 9, 10, 11], [12, 13, 14, 15, 16]]
        assert headers["ETag"] == doc["etag"]
        assert doc["bounds"]["worst_case_total"] == 8

    def test_invalid_config_lists_fields(self, api):
        status, doc, _ = api("POST", "/v1/sessions",
                             {"algorithm": "nt", "n": 16, "alpha": 1.5,
                              "replication": {"r": 1, "mode": "none"}})
        assert status == 422
        assert "alpha" in doc["fields"]

    def test_idempotent_replay(self, api):
        h = {"Idempotency-Key": "abc"}
        s1, d1, _ = api("POST", "/v1/sessions", MST_CONFIG, h)
        s2, d2, _ = api("POST", "/v1/sessions", MST_CONFIG, h)
        assert (s1, s2) == (201, 200)
        assert d1["session_id"] == d2["session_id"]

    def test_idempotency_key_conflict(self, api):
        h = {"Idempotency-Key": "abc"}
        api("POST", "/v1/sessions", MST_CONFIG, h)
        status, _, _ = api("POST", "/v1/sessions",
                           {**MST_CONFIG, "n": 8}, h)
        assert status == 409

    def test_session_persisted_to_disk(self, api):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        loaded = Session.load(f"{api.data_dir}/{doc['session_id']}.json")
        assert loaded.session_id == doc["session_id"]


class TestSnapshot:
    def test_get_roundtrip(self, api):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        status, snap, headers = api("GET", f"/v1/sessions/{doc['session_id']}")
        assert status == 200
        assert snap == doc
        assert "ETag" in headers

    def test_unknown_id(self, api):
        status, _, _ = api("GET", "/v1/sessions/" + "0" * 32)
        assert status == 404


class TestOutcomes:
    def outcomes_for(self, doc, infected):
        return [{"query_id": q["query_id"],
                 "result": "+" if set(q["members"]) & infected else "-"}
                for q in doc["pending"]]

    def test_advance_to_completion(self, api):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        sid = doc["session_id"]
        while doc["status"] == "active":
            status, doc, _ = api("POST", f"/v1/sessions/{sid}/outcomes",
                                 self.outcomes_for(doc, {7}),
                                 {"If-Match": doc["etag"]})
            assert status == 200
        assert doc["status"] == "complete"
        assert doc["diagnoses"]["positive"] == [7]
        assert doc["diagnoses"]["positive_labels"] == ["sample 7"]
        assert doc["tests_done"] == 8

    def test_stale_etag_rejected_state_unchanged(self, api):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        sid, etag = doc["session_id"], doc["etag"]
        body = self.outcomes_for(doc, {7})
        s1, doc1, _ = api("POST", f"/v1/sessions/{sid}/outcomes", body,
                          {"If-Match": etag})
        s2, doc2, _ = api("POST", f"/v1/sessions/{sid}/outcomes", body,
                          {"If-Match": etag})
        assert (s1, s2) == (200, 409)
        _, snap, _ = api("GET", f"/v1/sessions/{sid}")
        assert snap == doc1

    def test_missing_if_match(self, api):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        status, _, _ = api("POST", f"/v1/sessions/{doc['session_id']}/outcomes",
                           self.outcomes_for(doc, set()))
        assert status == 428

    def test_bad_result_string(self, api):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        status, err, _ = api("POST", f"/v1/sessions/{doc['session_id']}/outcomes",
                             [{"query_id": 1, "result": "yes"}],
                             {"If-Match": doc["etag"]})
        assert status == 422

    def test_unknown_query_id(self, api):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        status, err, _ = api("POST", f"/v1/sessions/{doc['session_id']}/outcomes",
                             [{"query_id": 99, "result": "+"}],
                             {"If-Match": doc["etag"]})
        assert status == 422

    def test_gbs_splitting_over_api(self, api):
        config = {"algorithm": "gbs", "n": 8, "d": 1,
                  "replication": {"r": 1, "mode": "none"},
                  "portion_budget_per_sample": 4}
        _, doc, _ = api("POST", "/v1/sessions", config)
        assert doc["pending"][0]["members"] == [1, 2, 3, 4, 5, 6, 7, 8]
        status, doc, _ = api("POST", f"/v1/sessions/{doc['session_id']}/outcomes",
                             [{"query_id": 1, "result": "+"}],
                             {"If-Match": doc["etag"]})
        assert status == 200
        assert doc["pending"][0]["members"] == [1, 2, 3, 4]


class TestCalc:
    def test_dilution(self, api):
        status, doc, _ = api("GET", "/v1/calc/dilution?vl=1e6&v95=1e3&r=3")
        assert status == 200
        assert doc["pool_size"] == 57

    def test_dilution_invalid(self, api):
        status, _, _ = api("GET", "/v1/calc/dilution?vl=1e6&v95=1e3&v50=1e4")
        assert status == 422

    def test_nt_average(self, api):
        status, doc, _ = api("GET", "/v1/calc/nt-average?alpha=0.05&n=16")
        assert status == 200
        assert abs(doc["expected_tests"] - 4.753216) < 1e-4

    def test_nt_average_invalid(self, api):
        status, _, _ = api("GET", "/v1/calc/nt-average?alpha=2&n=16")
        assert status == 422


class TestMeta:
    def test_openapi_served(self, api):
        status, doc, _ = api("GET", "/v1/openapi.json")
        assert status == 200
        assert "/v1/sessions" in doc["paths"]

    def test_unknown_route(self, api):
        status, _, _ = api("GET", "/v1/nope")
        assert status == 404

    def test_env_var_configuration(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GT_DATA_DIR", str(tmp_path / "envdata"))
        monkeypatch.setenv("GT_BIND_ADDR", "127.0.0.1:0")
        server = make_server()
        try:
            assert (tmp_path / "envdata").is_dir()
            assert server.server_address[0] == "127.0.0.1"
        finally:
            server.server_close()

    def test_restart_recovers_sessions(self, api, tmp_data_dir):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        server2 = make_server("127.0.0.1:0", tmp_data_dir)
        try:
            assert server2.RequestHandlerClass.store.get(doc["session_id"]) is not None
        finally:
            server2.server_close()

    def test_concurrent_posts_one_winner(self, api):
        _, doc, _ = api("POST", "/v1/sessions", MST_CONFIG)
        sid, etag = doc["session_id"], doc["etag"]
        body = [{"query_id": q["query_id"], "result": "-"} for q in doc["pending"]]
        results = []

        def worker():
            status, _, _ = api("POST", f"/v1/sessions/{sid}/outcomes", body,
                               {"If-Match": etag})
            results.append(status)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(results) == [200, 409, 409, 409]
