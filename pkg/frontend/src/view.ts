/**
 * Pure presentation derivations over server state.  Nothing here decides
 * which samples to pool next; the server is the single source of truth.
 */

import type { Algorithm, ApiSession, SessionConfigDoc } from "./types.js";

/** Pooling stops paying off once d/n reaches (3 - sqrt(5)) / 2. */
export const POOLING_FRACTION_LIMIT = (3 - Math.sqrt(5)) / 2;

export interface GroupChecklistItem {
  queryId: number;
  title: string;
  samples: { id: number; label: string; portionsUsed: number; budget: number }[];
  replicateIndex: number;
  budgetLimited: boolean;
}

export interface SessionView {
  sessionId: string;
  status: string;
  statusLine: string;
  groups: GroupChecklistItem[];
  progress: { diagnosed: number; total: number; percent: number };
  testsDone: number;
  boundNote: string;
  portionWarnings: string[];
  positives: string[];
  exportable: boolean;
}

export function makeSessionView(api: ApiSession): SessionView {
  const diagnosed =
    api.diagnoses.positive.length + api.diagnoses.negative.length;
  const groups = api.pending.map((q) => ({
    queryId: q.query_id,
    title:
      q.replicate_index > 1
        ? `Query ${q.query_id} (replicate ${q.replicate_index})`
        : `Query ${q.query_id}`,
    samples: q.members.map((id, i) => ({
      id,
      label: q.labels[i],
      portionsUsed: api.portions.used[String(id)] ?? 0,
      budget: api.portions.budget,
    })),
    replicateIndex: q.replicate_index,
    budgetLimited: q.budget_limited,
  }));

  const warnings: string[] = [];
  for (const [id, used] of Object.entries(api.portions.used)) {
    if (api.portions.budget - used <= 1 && api.status === "active") {
      const label = labelOf(api, Number(id));
      warnings.push(
        `${label}: ${used}/${api.portions.budget} portions used`,
      );
    }
  }

  return {
    sessionId: api.session_id,
    status: api.status,
    statusLine: statusLine(api),
    groups,
    progress: {
      diagnosed,
      total: api.n,
      percent: Math.round((100 * diagnosed) / api.n),
    },
    testsDone: api.tests_done,
    boundNote: boundNote(api),
    portionWarnings: warnings,
    positives: api.diagnoses.positive_labels,
    exportable: api.status !== "active",
  };
}

function labelOf(api: ApiSession, id: number): string {
  const labels = api.config.labels;
  return labels ? labels[id - 1] : `sample ${id}`;
}

function statusLine(api: ApiSession): string {
  if (api.status === "complete") {
    const k = api.diagnoses.positive.length;
    return k === 0
      ? "Complete: all samples negative"
      : `Complete: ${k} positive sample${k === 1 ? "" : "s"}`;
  }
  if (api.status === "aborted") {
    return `Aborted: ${api.abort_reason ?? "unknown reason"}`;
  }
  return `Active: ${api.pending.length} pooled test${api.pending.length === 1 ? "" : "s"} awaiting results`;
}

function boundNote(api: ApiSession): string {
  const worst = api.bounds.worst_case_total;
  if (worst !== null) {
    const remaining = Math.max(0, worst - api.tests_done);
    return `at most ${remaining} more test${remaining === 1 ? "" : "s"} (worst case ${worst})`;
  }
  const expected = api.bounds.expected_total;
  if (expected !== null) {
    return `about ${expected.toFixed(1)} tests expected in total`;
  }
  return "";
}

// -- create-screen helpers ----------------------------------------------------

export interface CreateForm {
  algorithm: Algorithm;
  n: number;
  d?: number;
  alpha?: number;
  replicates: number;
  mode: "none" | "negatives-only" | "all";
  budget?: number;
  labels?: string[];
}

/** Client-side mirror of the server's config rules (the server re-checks). */
export function validateCreateForm(form: CreateForm): Record<string, string> {
  const errors: Record<string, string> = {};
  if (!Number.isInteger(form.n) || form.n < 1) {
    errors.n = "pool size must be a positive integer";
  }
  if (form.algorithm === "nt") {
    if (form.alpha === undefined || !(form.alpha > 0 && form.alpha < 1)) {
      errors.alpha = "prior must be strictly between 0 and 1";
    }
  } else {
    if (form.d === undefined || !Number.isInteger(form.d) || form.d < 0) {
      errors.d = "infected bound must be a nonnegative integer";
    } else if (form.d >= form.n) {
      errors.d = "infected bound must be below the pool size";
    } else if (form.algorithm === "mst" && form.d === 0) {
      errors.d = "multi-stage needs d >= 1 (use nested testing for d = 0)";
    }
  }
  if (form.mode !== "none" && form.replicates < 1) {
    errors.replicates = "replicates must be at least 1";
  }
  if (form.mode === "none" && form.replicates !== 1) {
    errors.replicates = "single-read mode runs each test once";
  }
  if (form.labels && form.labels.length !== form.n) {
    errors.labels = `need exactly ${form.n} labels`;
  }
  if (form.labels && new Set(form.labels).size !== form.labels.length) {
    errors.labels = "labels must be unique";
  }
  return errors;
}

/** Pre-submission hints: is pooling worth it, what will it roughly cost. */
export function planningHints(form: CreateForm, ntExpected?: number): string[] {
  const hints: string[] = [];
  const fraction =
    form.algorithm === "nt" ? form.alpha : (form.d ?? 0) / form.n;
  if (fraction !== undefined && fraction >= POOLING_FRACTION_LIMIT) {
    hints.push(
      "individual testing recommended: expected infected fraction " +
        `${(100 * fraction).toFixed(0)}% is above the pooling threshold ` +
        `${(100 * POOLING_FRACTION_LIMIT).toFixed(1)}%`,
    );
  }
  if (form.algorithm === "nt" && ntExpected !== undefined) {
    hints.push(
      `nested testing expects about ${ntExpected.toFixed(1)} tests for ` +
        `${form.n} samples (vs ${form.n} individually)`,
    );
  }
  if (form.algorithm === "gbs") {
    hints.push("splitting runs one test at a time; results must come back in order");
  }
  if (form.algorithm === "mst") {
    hints.push("all groups of a stage can run in parallel on one plate");
  }
  return hints;
}

export function formToConfig(form: CreateForm): SessionConfigDoc {
  return {
    algorithm: form.algorithm,
    n: form.n,
    d: form.algorithm === "nt" ? null : form.d,
    alpha: form.algorithm === "nt" ? form.alpha : null,
    replication: {
      r: form.mode === "none" ? 1 : form.replicates,
      mode: form.mode,
    },
    portion_budget_per_sample: form.budget ?? 0,
    labels: form.labels ?? null,
  };
}

/** Diagnosis export for download buttons. */
export function diagnosesCsv(api: ApiSession): string {
  const rows = ["sample,label,status"];
  const status = new Map<number, string>();
  for (const id of api.diagnoses.positive) status.set(id, "positive");
  for (const id of api.diagnoses.negative) status.set(id, "negative");
  for (const id of api.diagnoses.undiagnosed) status.set(id, "undiagnosed");
  for (let id = 1; id <= api.n; id++) {
    rows.push(`${id},${labelOf(api, id)},${status.get(id) ?? "unknown"}`);
  }
  return rows.join("\n") + "\n";
}
