/**
 * Operator console wiring: create a session, work through its pooled
 * tests, and use the calculators.  State lives on the server; this file
 * renders snapshots and posts operator input.
 */

import { ApiError, Client, ConflictError } from "./api.js";
import {
  CreateForm,
  diagnosesCsv,
  formToConfig,
  makeSessionView,
  planningHints,
  validateCreateForm,
} from "./view.js";
import type { Algorithm, ApiSession, OutcomeEntry } from "./types.js";

const API_BASE =
  (window as unknown as { GT_API_BASE?: string }).GT_API_BASE ??
  `http://${location.hostname || "127.0.0.1"}:8714`;

const client = new Client(API_BASE);
const POLL_MS = 2000;

let currentSession: ApiSession | null = null;
let pollTimer: number | undefined;
let marks = new Map<number, "+" | "-">();

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function show(screen: "create" | "run" | "calc"): void {
  for (const name of ["create", "run", "calc"] as const) {
    $(`screen-${name}`).hidden = name !== screen;
    $(`nav-${name}`).classList.toggle("active", name === screen);
  }
}

function banner(text: string, kind: "info" | "error" = "info"): void {
  const el = $("banner");
  el.textContent = text;
  el.className = text ? `banner ${kind}` : "banner";
}

// -- create screen ----------------------------------------------------------

function readCreateForm(): CreateForm {
  const algorithm = (document.querySelector(
    'input[name="alg"]:checked',
  ) as HTMLInputElement).value as Algorithm;
  const mode = ($("f-mode") as HTMLSelectElement).value as CreateForm["mode"];
  const labelsRaw = ($("f-labels") as HTMLTextAreaElement).value.trim();
  return {
    algorithm,
    n: Number(($("f-n") as HTMLInputElement).value),
    d: algorithm === "nt" ? undefined : Number(($("f-d") as HTMLInputElement).value),
    alpha:
      algorithm === "nt"
        ? Number(($("f-alpha") as HTMLInputElement).value)
        : undefined,
    replicates: mode === "none" ? 1 : Number(($("f-r") as HTMLInputElement).value),
    mode,
    budget: Number(($("f-budget") as HTMLInputElement).value) || undefined,
    labels: labelsRaw ? labelsRaw.split(/\s*[\n,]\s*/).filter(Boolean) : undefined,
  };
}

function renderFieldErrors(errors: Record<string, string>): void {
  for (const field of ["n", "d", "alpha", "replicates", "labels"]) {
    const slot = document.getElementById(`err-${field}`);
    if (slot) slot.textContent = errors[field] ?? "";
  }
}

async function refreshHints(): Promise<void> {
  const form = readCreateForm();
  const errors = validateCreateForm(form);
  renderFieldErrors(errors);
  ($("f-d") as HTMLInputElement).disabled = form.algorithm === "nt";
  ($("f-alpha") as HTMLInputElement).disabled = form.algorithm !== "nt";
  let ntExpected: number | undefined;
  if (form.algorithm === "nt" && !errors.alpha && !errors.n) {
    try {
      ntExpected = (await client.calcNtAverage(form.alpha!, form.n)).expected_tests;
    } catch {
      ntExpected = undefined; // hints are optional, the form still works
    }
  }
  const list = $("hints");
  list.innerHTML = "";
  for (const hint of planningHints(form, ntExpected)) {
    const li = document.createElement("li");
    li.textContent = hint;
    list.appendChild(li);
  }
}

async function submitCreate(): Promise<void> {
  const form = readCreateForm();
  const errors = validateCreateForm(form);
  renderFieldErrors(errors);
  if (Object.keys(errors).length) return;
  const button = $("create-submit") as HTMLButtonElement;
  button.disabled = true;
  try {
    const session = await client.createSession(
      formToConfig(form),
      crypto.randomUUID(),
    );
    banner("");
    openSession(session);
  } catch (err) {
    if (err instanceof ApiError && err.body.fields) {
      renderFieldErrors(err.body.fields);
    } else {
      banner(String(err instanceof Error ? err.message : err), "error");
    }
  } finally {
    button.disabled = false;
  }
}

// -- run screen ---------------------------------------------------------------

function openSession(session: ApiSession): void {
  currentSession = session;
  marks = new Map();
  show("run");
  renderRun();
  schedulePoll();
}

function schedulePoll(): void {
  window.clearTimeout(pollTimer);
  pollTimer = window.setTimeout(poll, POLL_MS);
}

async function poll(): Promise<void> {
  if (!currentSession) return;
  try {
    const fresh = await client.getSession(currentSession.session_id);
    if (fresh.etag !== currentSession.etag) {
      currentSession = fresh;
      marks = new Map();
      banner("session advanced elsewhere; showing the latest state");
      renderRun();
    }
  } catch {
    banner("service unreachable; retrying", "error");
  }
  if (currentSession.status === "active") schedulePoll();
}

function renderRun(): void {
  const session = currentSession;
  if (!session) return;
  const view = makeSessionView(session);
  $("run-title").textContent = `Session ${view.sessionId.slice(0, 8)}…`;
  $("run-status").textContent = view.statusLine;
  $("run-progress").textContent =
    `${view.progress.diagnosed}/${view.progress.total} diagnosed ` +
    `(${view.progress.percent}%), ${view.testsDone} tests so far` +
    (view.boundNote ? `, ${view.boundNote}` : "");
  const warn = $("run-warnings");
  warn.innerHTML = "";
  for (const w of view.portionWarnings) {
    const li = document.createElement("li");
    li.textContent = w;
    warn.appendChild(li);
  }

  const groups = $("groups");
  groups.innerHTML = "";
  for (const group of view.groups) {
    const card = document.createElement("fieldset");
    card.className = "group";
    const legend = document.createElement("legend");
    legend.textContent =
      group.title + (group.budgetLimited ? " — budget-limited" : "");
    card.appendChild(legend);
    const ul = document.createElement("ul");
    for (const sample of group.samples) {
      const li = document.createElement("li");
      li.textContent = `${sample.label} (${sample.portionsUsed}/${sample.budget} portions)`;
      ul.appendChild(li);
    }
    card.appendChild(ul);
    for (const result of ["+", "-"] as const) {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = `outcome-${group.queryId}`;
      radio.value = result;
      if (marks.get(group.queryId) === result) radio.checked = true;
      radio.addEventListener("change", () => {
        marks.set(group.queryId, result);
        renderSubmitState();
      });
      label.appendChild(radio);
      label.append(result === "+" ? " positive" : " negative");
      card.appendChild(label);
    }
    groups.appendChild(card);
  }

  $("results").hidden = view.status === "active";
  if (view.status !== "active") {
    $("positives").textContent = view.positives.length
      ? `Positive: ${view.positives.join(", ")}`
      : "No positives.";
  }
  ($("export-json") as HTMLButtonElement).disabled = !view.exportable;
  ($("export-csv") as HTMLButtonElement).disabled = !view.exportable;
  renderSubmitState();
}

function renderSubmitState(): void {
  const session = currentSession;
  const button = $("submit-outcomes") as HTMLButtonElement;
  if (!session || session.status !== "active") {
    button.disabled = true;
    return;
  }
  button.disabled = !session.pending.every((q) => marks.has(q.query_id));
}

async function submitOutcomes(): Promise<void> {
  const session = currentSession;
  if (!session) return;
  const outcomes: OutcomeEntry[] = session.pending.map((q) => ({
    query_id: q.query_id,
    result: marks.get(q.query_id)!,
  }));
  const button = $("submit-outcomes") as HTMLButtonElement;
  button.disabled = true; // double-click guard; ETag covers the rest
  try {
    currentSession = await client.postOutcomes(session.session_id, outcomes);
    marks = new Map();
    banner("");
    renderRun();
  } catch (err) {
    if (err instanceof ConflictError) {
      banner("another operator updated this session; reloading", "error");
      currentSession = await client.getSession(session.session_id);
      marks = new Map();
      renderRun();
    } else {
      banner(String(err instanceof Error ? err.message : err), "error");
      renderSubmitState();
    }
  }
}

function download(name: string, text: string, type: string): void {
  const a = document.createElement("a");
  a.href = URL.createObjectURL(new Blob([text], { type }));
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

// -- calculators ---------------------------------------------------------------

async function runDilutionCalc(): Promise<void> {
  const out = $("calc-dilution-out");
  try {
    const report = await client.calcDilution({
      vl: Number(($("c-vl") as HTMLInputElement).value),
      v95: Number(($("c-v95") as HTMLInputElement).value),
      v50: Number(($("c-v50") as HTMLInputElement).value) || undefined,
      r: Number(($("c-r") as HTMLInputElement).value) || 1,
    });
    out.textContent =
      `max pool size ${report.pool_size} (raw ${report.raw.toFixed(2)}), ` +
      `${report.portions} portions per swab` +
      (report.note ? ` — ${report.note}` : "");
  } catch (err) {
    out.textContent = err instanceof Error ? err.message : String(err);
  }
}

async function runNtCalc(): Promise<void> {
  const out = $("calc-nt-out");
  try {
    const value = await client.calcNtAverage(
      Number(($("c-alpha") as HTMLInputElement).value),
      Number(($("c-n") as HTMLInputElement).value),
    );
    out.textContent =
      `expected tests ${value.expected_tests.toFixed(2)} for ` +
      `${value.n} samples at prior ${value.alpha}`;
  } catch (err) {
    out.textContent = err instanceof Error ? err.message : String(err);
  }
}

// -- boot ----------------------------------------------------------------------

export function boot(): void {
  $("nav-create").addEventListener("click", () => show("create"));
  $("nav-run").addEventListener("click", () => show("run"));
  $("nav-calc").addEventListener("click", () => show("calc"));
  for (const id of ["f-n", "f-d", "f-alpha", "f-r", "f-mode", "f-labels"]) {
    $(id).addEventListener("input", () => void refreshHints());
  }
  for (const radio of document.querySelectorAll('input[name="alg"]')) {
    radio.addEventListener("change", () => void refreshHints());
  }
  $("create-submit").addEventListener("click", () => void submitCreate());
  $("submit-outcomes").addEventListener("click", () => void submitOutcomes());
  $("open-session").addEventListener("click", async () => {
    const id = ($("f-session-id") as HTMLInputElement).value.trim();
    if (!id) return;
    try {
      openSession(await client.getSession(id));
    } catch (err) {
      banner(err instanceof Error ? err.message : String(err), "error");
    }
  });
  $("export-json").addEventListener("click", () => {
    if (currentSession) {
      download(
        `session-${currentSession.session_id}.json`,
        JSON.stringify(currentSession, null, 1),
        "application/json",
      );
    }
  });
  $("export-csv").addEventListener("click", () => {
    if (currentSession) {
      download(
        `diagnoses-${currentSession.session_id}.csv`,
        diagnosesCsv(currentSession),
        "text/csv",
      );
    }
  });
  $("calc-dilution-run").addEventListener("click", () => void runDilutionCalc());
  $("calc-nt-run").addEventListener("click", () => void runNtCalc());
  show("create");
  void refreshHints();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
