/**
 * Typed client for the /v1 session service.  All planner logic stays on
 * the server; this file only moves JSON and tracks ETags.
 */

import { getEtag, setEtag } from "./etag-store.js";
import type {
  ApiSession,
  DilutionReport,
  NtAverage,
  OutcomeEntry,
  SessionConfigDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: { error?: string; fields?: Record<string, string> },
  ) {
    super(body.error ?? `HTTP ${status}`);
  }
}

/** 409 from a stale If-Match: someone else advanced the session. */
export class ConflictError extends ApiError {}

async function parse(resp: Response): Promise<unknown> {
  const text = await resp.text();
  try {
    return JSON.parse(text);
  } catch {
    return { error: text || `HTTP ${resp.status}` };
  }
}

export class Client {
  constructor(private base: string) {}

  private async request(
    method: string,
    path: string,
    body?: unknown,
    headers?: Record<string, string>,
  ): Promise<unknown> {
    const resp = await fetch(this.base + path, {
      method,
      headers: {
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
        ...headers,
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const doc = await parse(resp);
    if (!resp.ok) {
      const payload = doc as { error?: string };
      if (resp.status === 409) throw new ConflictError(resp.status, payload);
      throw new ApiError(resp.status, payload);
    }
    return doc;
  }

  private remember(session: ApiSession): ApiSession {
    setEtag(session.session_id, session.etag);
    return session;
  }

  async createSession(
    config: SessionConfigDoc,
    idempotencyKey: string,
  ): Promise<ApiSession> {
    const doc = await this.request("POST", "/v1/sessions", config, {
      "Idempotency-Key": idempotencyKey,
    });
    return this.remember(doc as ApiSession);
  }

  async getSession(sessionId: string): Promise<ApiSession> {
    const doc = await this.request("GET", `/v1/sessions/${sessionId}`);
    return this.remember(doc as ApiSession);
  }

  /** Post the outcome batch using the last seen ETag (or an explicit one). */
  async postOutcomes(
    sessionId: string,
    outcomes: OutcomeEntry[],
    etag?: string,
  ): Promise<ApiSession> {
    const match = etag ?? getEtag(sessionId);
    if (!match) throw new Error(`no ETag known for session ${sessionId}`);
    const doc = await this.request(
      "POST",
      `/v1/sessions/${sessionId}/outcomes`,
      outcomes,
      { "If-Match": match },
    );
    return this.remember(doc as ApiSession);
  }

  async calcDilution(params: {
    vl: number;
    v95: number;
    v50?: number;
    r?: number;
    t?: number | "log-rule";
    gamma_star?: number;
  }): Promise<DilutionReport> {
    const query = new URLSearchParams();
    for (const [key, value] of Object.entries(params)) {
      if (value !== undefined) query.set(key, String(value));
    }
    return (await this.request(
      "GET",
      `/v1/calc/dilution?${query}`,
    )) as DilutionReport;
  }

  async calcNtAverage(alpha: number, n: number): Promise<NtAverage> {
    return (await this.request(
      "GET",
      `/v1/calc/nt-average?alpha=${alpha}&n=${n}`,
    )) as NtAverage;
  }
}
