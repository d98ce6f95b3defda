import assert from "node:assert/strict";
import { createServer, IncomingMessage, ServerResponse } from "node:http";
import { AddressInfo } from "node:net";
import { after, before, test } from "node:test";

import { ApiError, Client, ConflictError } from "../src/api.js";
import { getEtag } from "../src/etag-store.js";

/** Minimal scripted stand-in for the session service. */
let server: ReturnType<typeof createServer>;
let client: Client;
const seen: { method?: string; url?: string; headers?: Record<string, unknown> }[] = [];

function respond(res: ServerResponse, status: number, body: unknown): void {
  const text = JSON.stringify(body);
  res.writeHead(status, { "Content-Type": "application/json" });
  res.end(text);
}

before(async () => {
  server = createServer((req: IncomingMessage, res: ServerResponse) => {
    seen.push({ method: req.method, url: req.url, headers: { ...req.headers } });
    if (req.method === "POST" && req.url === "/v1/sessions") {
      return respond(res, 201, { session_id: "s1", etag: '"e1"', pending: [] });
    }
    if (req.method === "GET" && req.url === "/v1/sessions/s1") {
      return respond(res, 200, { session_id: "s1", etag: '"e2"', pending: [] });
    }
    if (req.method === "POST" && req.url === "/v1/sessions/s1/outcomes") {
      if (req.headers["if-match"] !== '"e2"') {
        return respond(res, 409, { error: "stale ETag" });
      }
      return respond(res, 200, { session_id: "s1", etag: '"e3"', pending: [] });
    }
    if (req.url?.startsWith("/v1/calc/nt-average")) {
      return respond(res, 200, { alpha: 0.05, n: 16, expected_tests: 4.75 });
    }
    if (req.url?.startsWith("/v1/calc/dilution")) {
      return respond(res, 422, { error: "invalid parameters: v50" });
    }
    respond(res, 404, { error: "no route" });
  });
  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const { port } = server.address() as AddressInfo;
  client = new Client(`http://127.0.0.1:${port}`);
});

after(() => server.close());

test("create stores the returned etag and sends the idempotency key", async () => {
  const session = await client.createSession(
    { algorithm: "mst", n: 16, d: 1, replication: { r: 1, mode: "none" } },
    "key-1",
  );
  assert.equal(session.session_id, "s1");
  assert.equal(getEtag("s1"), '"e1"');
  const create = seen.find((r) => r.url === "/v1/sessions");
  assert.equal(create?.headers?.["idempotency-key"], "key-1");
});

test("stale etag raises ConflictError; refresh then succeed", async () => {
  await assert.rejects(
    client.postOutcomes("s1", [{ query_id: 1, result: "-" }]),
    ConflictError,
  );
  await client.getSession("s1"); // pick up '"e2"'
  const doc = await client.postOutcomes("s1", [{ query_id: 1, result: "-" }]);
  assert.equal(doc.etag, '"e3"');
  assert.equal(getEtag("s1"), '"e3"');
  const post = seen.filter((r) => r.url === "/v1/sessions/s1/outcomes").at(-1);
  assert.equal(post?.headers?.["if-match"], '"e2"');
});

test("validation failures surface as ApiError with the message", async () => {
  await assert.rejects(
    client.calcDilution({ vl: 1, v95: 2, v50: 3 }),
    (err: unknown) =>
      err instanceof ApiError &&
      !(err instanceof ConflictError) &&
      err.status === 422 &&
      /v50/.test(err.message),
  );
});

test("calculator results come back typed", async () => {
  const value = await client.calcNtAverage(0.05, 16);
  assert.equal(value.expected_tests, 4.75);
});
