/** Wire types of the /v1 session service. */

export type Algorithm = "gbs" | "mst" | "nt";
export type ReplicationMode = "none" | "negatives-only" | "all";

export interface ReplicationDoc {
  r: number;
  mode: ReplicationMode;
}

export interface KitProfileDoc {
  v50: number;
  v95: number;
  beta: number;
  chi: number;
}

export interface SessionConfigDoc {
  algorithm: Algorithm;
  n: number;
  d?: number | null;
  alpha?: number | null;
  stages?: number | null;
  verify?: boolean;
  profile?: KitProfileDoc | null;
  replication: ReplicationDoc;
  portion_budget_per_sample?: number;
  labels?: string[] | null;
}

export interface PendingQuery {
  query_id: number;
  members: number[];
  labels: string[];
  replicate_index: number;
  budget_limited: boolean;
}

export interface Diagnoses {
  positive: number[];
  negative: number[];
  undiagnosed: number[];
  positive_labels: string[];
}

export interface ApiSession {
  session_id: string;
  status: "active" | "complete" | "aborted";
  abort_reason: string | null;
  algorithm: Algorithm;
  n: number;
  pending: PendingQuery[];
  diagnoses: Diagnoses;
  portions: { budget: number; used: Record<string, number> };
  tests_done: number;
  bounds: { worst_case_total: number | null; expected_total: number | null };
  config: SessionConfigDoc;
  etag: string;
}

export interface DilutionReport {
  pool_size: number;
  raw: number;
  portions: number;
  assumptions: Record<string, unknown>;
  note?: string;
}

export interface NtAverage {
  alpha: number;
  n: number;
  expected_tests: number;
}

export interface OutcomeEntry {
  query_id: number;
  result: "+" | "-";
}
