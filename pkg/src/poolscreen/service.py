"""HTTP JSON API for the operator console.

Stdlib-only server exposing session lifecycle plus the dilution and
expected-tests calculators.  Sessions persist as one JSON file each under
GT_DATA_DIR (atomic write-rename); per-session mutations are serialized by
an in-process lock plus ETag compare-and-swap, so a stale client update
gets 409 instead of clobbering newer state.

No authentication: v1 assumes deployment inside the lab network.  Run with
``python -m poolscreen.service`` (GT_BIND_ADDR, default 127.0.0.1:8714).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .dilution import dilution_report
from .errors import ConfigError, DomainError, PoolscreenError, ProtocolError
from .planners import GroupOutcome, expected_tests, gbs_worst_case_bound, mst_worst_case_bound
from .session import Session, SessionConfig

DEFAULT_BIND = "127.0.0.1:8714"
DEFAULT_DATA_DIR = "./gt-data"


def session_etag(session: Session) -> str:
    digest = hashlib.sha256(str(len(session.events)).encode()).hexdigest()[:16]
    return f'"{digest}"'


def api_session_doc(session: Session) -> dict:
    config = session.config
    flags = session.pending_flags()
    pending = []
    for q in session.pending():
        pending.append({
            "query_id": q.query_id,
            "members": list(q.members),
            "labels": [config.label_of(s) for s in q.members],
            "replicate_index": q.replicate_index,
            "budget_limited": flags.get(q.query_id, False),
        })
    diagnoses = session.diagnoses()
    diagnoses["positive_labels"] = [config.label_of(s) for s in diagnoses["positive"]]
    bounds: dict = {"worst_case_total": None, "expected_total": None}
    if config.algorithm == "gbs":
        bounds["worst_case_total"] = math.ceil(gbs_worst_case_bound(config.n, config.d))
    elif config.algorithm == "mst":
        bounds["worst_case_total"] = min(
            math.ceil(mst_worst_case_bound(config.n, config.d)), config.n)
    else:
        bounds["expected_total"] = expected_tests(config.alpha, config.n)
    return {
        "session_id": session.session_id,
        "status": session.status,
        "abort_reason": session.abort_reason,
        "algorithm": config.algorithm,
        "n": config.n,
        "pending": pending,
        "diagnoses": diagnoses,
        "portions": {
            "budget": config.budget(),
            "used": {str(k): v for k, v in sorted(session.portions_used().items())},
        },
        "tests_done": session.bridge.physical_tests,
        "bounds": bounds,
        "config": config.to_doc(),
        "etag": session_etag(session),
    }


def validate_config_doc(doc: dict) -> dict:
    """Field-level validation messages; empty dict when the doc is clean."""
    fields: dict[str, str] = {}
    if not isinstance(doc, dict):
        return {"body": "config must be a JSON object"}
    alg = doc.get("algorithm")
    if alg not in ("gbs", "mst", "nt"):
        fields["algorithm"] = "must be one of gbs, mst, nt"
    n = doc.get("n")
    if not isinstance(n, int) or n < 1:
        fields["n"] = "must be a positive integer"
    if alg in ("gbs", "mst"):
        d = doc.get("d")
        if not isinstance(d, int) or d < 0 or (isinstance(n, int) and d >= n):
            fields["d"] = "must be an integer with 0 <= d < n"
        if alg == "mst" and d == 0:
            fields["d"] = "mst needs d >= 1; use nt or a single pooled test"
    if alg == "nt":
        alpha = doc.get("alpha")
        if not isinstance(alpha, (int, float)) or not 0.0 < float(alpha) < 1.0:
            fields["alpha"] = "must be a number strictly between 0 and 1"
    rep = doc.get("replication")
    if rep is not None:
        if rep.get("mode") not in ("none", "negatives-only", "all"):
            fields["replication.mode"] = "must be none, negatives-only, or all"
        if not isinstance(rep.get("r"), int) or rep.get("r", 0) < 1:
            fields["replication.r"] = "must be a positive integer"
    return fields


class SessionStore:
    """Disk-backed session registry with per-session locks."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.idempotency: dict[str, tuple[str, str]] = {}
        self._registry_lock = threading.Lock()
        for name in sorted(os.listdir(data_dir)):
            if name.endswith(".json"):
                try:
                    session = Session.load(os.path.join(data_dir, name))
                except PoolscreenError:
                    continue
                self.sessions[session.session_id] = session
                self.locks[session.session_id] = threading.Lock()

    def _path(self, session_id: str) -> str:
        return os.path.join(self.data_dir, f"{session_id}.json")

    def create(self, config: SessionConfig, idempotency_key: str | None,
               body_digest: str) -> tuple[Session, bool]:
        with self._registry_lock:
            if idempotency_key is not None:
                hit = self.idempotency.get(idempotency_key)
                if hit is not None:
                    prior_digest, session_id = hit
                    if prior_digest != body_digest:
                        raise KeyError(idempotency_key)
                    return self.sessions[session_id], False
            session = Session.create(config)
            self.sessions[session.session_id] = session
            self.locks[session.session_id] = threading.Lock()
            if idempotency_key is not None:
                self.idempotency[idempotency_key] = (body_digest, session.session_id)
        session.save(self._path(session.session_id))
        return session, True

    def get(self, session_id: str) -> Session | None:
        return self.sessions.get(session_id)

    def lock(self, session_id: str) -> threading.Lock:
        return self.locks[session_id]

    def persist(self, session: Session) -> None:
        session.save(self._path(session.session_id))


OPENAPI = {
    "openapi": "3.0.3",
    "info": {"title": "poolscreen session service", "version": "1"},
    "paths": {
        "/v1/sessions": {"post": {
            "summary": "Create a session from a SessionConfig document",
            "parameters": [{"name": "Idempotency-Key", "in": "header",
                            "required": False, "schema": {"type": "string"}}],
            "responses": {"201": {"description": "created"},
                          "200": {"description": "idempotent replay"},
                          "409": {"description": "idempotency key reused with a different body"},
                          "422": {"description": "invalid config (field messages)"}}}},
        "/v1/sessions/{id}": {"get": {
            "summary": "Session snapshot with ETag",
            "responses": {"200": {"description": "snapshot"},
                          "404": {"description": "unknown session"}}}},
        "/v1/sessions/{id}/outcomes": {"post": {
            "summary": "Report outcomes for the pending queries",
            "parameters": [{"name": "If-Match", "in": "header", "required": True,
                            "schema": {"type": "string"}}],
            "responses": {"200": {"description": "advanced"},
                          "404": {"description": "unknown session"},
                          "409": {"description": "stale ETag"},
                          "422": {"description": "bad outcome list"},
                          "428": {"description": "missing If-Match"}}}},
        "/v1/calc/dilution": {"get": {
            "summary": "Max pool size and portion budget",
            "parameters": [{"name": k, "in": "query", "schema": {"type": "string"}}
                           for k in ("vl", "v95", "v50", "r", "t", "gamma_star")],
            "responses": {"200": {"description": "report"},
                          "422": {"description": "invalid parameters"}}}},
        "/v1/calc/nt-average": {"get": {
            "summary": "Expected tests for nested testing",
            "parameters": [{"name": k, "in": "query", "schema": {"type": "string"}}
                           for k in ("alpha", "n")],
            "responses": {"200": {"description": "value"},
                          "422": {"description": "invalid parameters"}}}},
    },
}

_SESSION_RE = re.compile(r"^/v1/sessions/([0-9a-f]{32})$")
_OUTCOMES_RE = re.compile(r"^/v1/sessions/([0-9a-f]{32})/outcomes$")


class ApiHandler(BaseHTTPRequestHandler):
    server_version = "poolscreen/1"
    protocol_version = "HTTP/1.1"
    store: SessionStore = None  # set by make_server

    # -- plumbing ----------------------------------------------------------

    def log_message(self, fmt, *args):
        if os.environ.get("GT_LOG"):
            super().log_message(fmt, *args)

    def _send(self, code: int, doc, headers: dict | None = None) -> None:
        body = json.dumps(doc, indent=1).encode() + b"\n"
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Expose-Headers", "ETag")
        for k, v in (headers or {}).items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return None, None
        try:
            return json.loads(raw.decode("utf-8")), raw
        except (UnicodeDecodeError, json.JSONDecodeError):
            return ..., raw  # sentinel: present but unparseable

    # -- routes ----------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers",
                         "Content-Type, If-Match, Idempotency-Key")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/v1/openapi.json":
            return self._send(200, OPENAPI)
        m = _SESSION_RE.match(url.path)
        if m:
            session = self.store.get(m.group(1))
            if session is None:
                return self._send(404, {"error": "unknown session id"})
            return self._send(200, api_session_doc(session),
                              {"ETag": session_etag(session)})
        if url.path == "/v1/calc/dilution":
            return self._calc_dilution(parse_qs(url.query))
        if url.path == "/v1/calc/nt-average":
            return self._calc_nt_average(parse_qs(url.query))
        return self._send(404, {"error": f"no route for {url.path}"})

    def do_POST(self):
        url = urlparse(self.path)
        if url.path == "/v1/sessions":
            return self._create_session()
        m = _OUTCOMES_RE.match(url.path)
        if m:
            return self._post_outcomes(m.group(1))
        return self._send(404, {"error": f"no route for {url.path}"})

    # -- handlers --------------------------------------------------------------------

    def _create_session(self):
        doc, raw = self._read_body()
        if doc is None or doc is ...:
            return self._send(422, {"error": "body must be a SessionConfig JSON object"})
        fields = validate_config_doc(doc)
        if fields:
            return self._send(422, {"error": "invalid config", "fields": fields})
        try:
            config = SessionConfig.from_doc(doc)
        except (PoolscreenError, KeyError, TypeError, ValueError) as exc:
            return self._send(422, {"error": f"invalid config: {exc}"})
        key = self.headers.get("Idempotency-Key")
        digest = hashlib.sha256(raw).hexdigest()
        try:
            session, created = self.store.create(config, key, digest)
        except KeyError:
            return self._send(409, {"error": "idempotency key already used "
                                             "with a different body"})
        except ConfigError as exc:
            return self._send(422, {"error": str(exc)})
        return self._send(201 if created else 200, api_session_doc(session),
                          {"ETag": session_etag(session)})

    def _post_outcomes(self, session_id: str):
        session = self.store.get(session_id)
        if session is None:
            return self._send(404, {"error": "unknown session id"})
        if_match = self.headers.get("If-Match")
        if not if_match:
            return self._send(428, {"error": "If-Match header with the current "
                                             "ETag is required"})
        doc, _ = self._read_body()
        if doc is ... or not isinstance(doc, list):
            return self._send(422, {"error": "body must be a JSON array of "
                                             '{"query_id", "result"} objects'})
        outcomes = []
        for item in doc:
            result = item.get("result") if isinstance(item, dict) else None
            qid = item.get("query_id") if isinstance(item, dict) else None
            if result not in ("+", "-") or not isinstance(qid, int):
                return self._send(422, {"error": f"bad outcome entry {item!r}: "
                                                 'need integer query_id and result "+" or "-"'})
            outcomes.append(GroupOutcome(qid, result == "+"))
        with self.store.lock(session_id):
            if session_etag(session) != if_match:
                return self._send(409, {"error": "stale ETag: session changed; "
                                                 "refresh and re-apply"})
            try:
                session.report_outcomes(outcomes)
            except ProtocolError as exc:
                return self._send(422, {"error": str(exc)})
            self.store.persist(session)
            return self._send(200, api_session_doc(session),
                              {"ETag": session_etag(session)})

    def _calc_dilution(self, query: dict):
        def num(name, default=None):
            if name not in query:
                return default
            return float(query[name][0])
        try:
            t_raw = query.get("t", [None])[0]
            tests = None if t_raw in (None, "log-rule") else float(t_raw)
            report = dilution_report(
                vl=num("vl"), v95=num("v95"), v50=num("v50"),
                gamma_star=num("gamma_star", 0.05),
                replicates=int(num("r", 1)), tests_per_sample=tests)
        except (TypeError, ValueError, DomainError) as exc:
            return self._send(422, {"error": f"invalid parameters: {exc}"})
        return self._send(200, report)

    def _calc_nt_average(self, query: dict):
        try:
            alpha = float(query["alpha"][0])
            n = int(query["n"][0])
            if not 0.0 < alpha < 1.0 or n < 1:
                raise ValueError("need 0 < alpha < 1 and n >= 1")
            value = expected_tests(alpha, n)
        except (KeyError, ValueError, PoolscreenError) as exc:
            return self._send(422, {"error": f"invalid parameters: {exc}"})
        return self._send(200, {"alpha": alpha, "n": n, "expected_tests": value})


def make_server(bind: str | None = None, data_dir: str | None = None) -> ThreadingHTTPServer:
    bind = bind or os.environ.get("GT_BIND_ADDR", DEFAULT_BIND)
    data_dir = data_dir or os.environ.get("GT_DATA_DIR", DEFAULT_DATA_DIR)
    host, _, port = bind.rpartition(":")
    store = SessionStore(data_dir)
    handler = type("BoundApiHandler", (ApiHandler,), {"store": store})
    return ThreadingHTTPServer((host or "127.0.0.1", int(port)), handler)


def main(argv=None) -> int:
    import argparse
    parser = argparse.ArgumentParser(prog="poolscreen-service",
                                     description="Session HTTP API")
    parser.add_argument("--bind", default=None, help="host:port (or GT_BIND_ADDR)")
    parser.add_argument("--data-dir", default=None, help="session dir (or GT_DATA_DIR)")
    args = parser.parse_args(argv)
    server = make_server(args.bind, args.data_dir)
    host, port = server.server_address[:2]
    print(f"poolscreen service on http://{host}:{port} "
          f"(no auth; lab-network deployment assumed)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
