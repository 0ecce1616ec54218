/* DOM builders for the console pages.

   Every value shown here is copied out of an API payload with String();
   nothing is rounded, sorted, or recomputed.  Tests compare rendered
   text back to the payloads, so keep that rule intact. */

import type { SessionView, TimelineItem } from "./timeline.js";
import type { EvalReport } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className !== undefined) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function field(parent: HTMLElement, name: string, value: unknown): void {
  const span = el("span", `field ${name}`, String(value));
  span.setAttribute("data-field", name);
  parent.appendChild(span);
}

// -- chat timeline --------------------------------------------------------

function renderItem(item: TimelineItem): HTMLElement {
  const box = el("article", `event ${item.kind}`);
  box.setAttribute("data-kind", item.kind);
  box.setAttribute("data-seq", String(item.seq));
  if (item.kind === "retrieval") {
    field(box, "query", item.payload["query"] ?? "");
    const list = el("ol", "hits");
    const hits = (item.payload["hits"] as Array<Record<string, unknown>>) ?? [];
    for (const hit of hits) {
      const li = el("li", "hit");
      field(li, "chunk_id", hit["chunk_id"]);
      field(li, "score", hit["score"]);
      field(li, "rank", hit["rank"]);
      field(li, "snippet", hit["snippet"]);
      list.appendChild(li);
    }
    box.appendChild(list);
  } else if (item.kind === "note_update") {
    field(box, "old_revision", item.payload["old_revision"]);
    field(box, "new_revision", item.payload["new_revision"]);
    field(box, "accepted", item.payload["accepted"]);
    const note = el("pre", "note", String(item.payload["note"] ?? ""));
    note.setAttribute("data-field", "note");
    box.appendChild(note);
  } else if (item.kind === "stop") {
    field(box, "reason", item.payload["reason"]);
    field(box, "iterations", item.payload["iterations"]);
  } else {
    const raw = el("pre", "raw", JSON.stringify(item.payload));
    raw.setAttribute("data-field", "raw");
    box.appendChild(raw);
  }
  return box;
}

/** Render a session as one collapsible block per workflow iteration. */
export function renderTimeline(view: SessionView): HTMLElement {
  const root = el("section", "timeline");
  root.setAttribute("data-state", view.state);
  root.appendChild(el("p", "user-query", view.query));

  const groups = new Map<number, TimelineItem[]>();
  for (const item of view.items) {
    const bucket = groups.get(item.iteration);
    if (bucket === undefined) groups.set(item.iteration, [item]);
    else bucket.push(item);
  }
  for (const [iteration, items] of groups) {
    const details = el("details", "iteration");
    details.open = true;
    details.setAttribute("data-iteration", String(iteration));
    details.appendChild(el("summary", undefined, `iteration ${iteration}`));
    for (const item of items) details.appendChild(renderItem(item));
    root.appendChild(details);
  }

  if (view.answer !== "") {
    const answer = el("p", "answer", view.answer);
    answer.setAttribute("data-field", "answer");
    root.appendChild(answer);
  }
  if (view.state === "done") {
    const badge = el("p", "terminal done", view.runId === null ? "done" : `done ${view.runId}`);
    badge.setAttribute("data-terminal", "done");
    root.appendChild(badge);
  } else if (view.state === "error" && view.error !== null) {
    const badge = el("p", "terminal error", `${view.error.code}: ${view.error.message}`);
    badge.setAttribute("data-terminal", "error");
    root.appendChild(badge);
  }
  return root;
}

// -- evaluation report ----------------------------------------------------

/** Column order: first-seen key order across the report rows. */
export function evalColumns(report: EvalReport): string[] {
  const columns: string[] = [];
  for (const row of report.rows) {
    for (const key of Object.keys(row)) {
      if (!columns.includes(key)) columns.push(key);
    }
  }
  for (const key of Object.keys(report.metrics)) {
    if (!columns.includes(key)) columns.push(key);
  }
  return columns;
}

/** One row per report row, one footer row echoing the aggregate metrics. */
export function renderEvalTable(report: EvalReport): HTMLTableElement {
  const table = el("table", "eval-report");
  table.setAttribute("data-eval-id", report.eval_id);
  const columns = evalColumns(report);

  const thead = el("thead");
  const headRow = el("tr");
  for (const column of columns) headRow.appendChild(el("th", undefined, column));
  thead.appendChild(headRow);
  table.appendChild(thead);

  const tbody = el("tbody");
  for (const row of report.rows) {
    const tr = el("tr");
    for (const column of columns) {
      tr.appendChild(el("td", undefined, column in row ? String(row[column]) : ""));
    }
    tbody.appendChild(tr);
  }
  table.appendChild(tbody);

  const tfoot = el("tfoot");
  const aggRow = el("tr", "aggregate");
  for (const [i, column] of columns.entries()) {
    const cell = el("td");
    if (column in report.metrics) cell.textContent = String(report.metrics[column]);
    else if (i === 0) cell.textContent = "aggregate";
    aggRow.appendChild(cell);
  }
  tfoot.appendChild(aggRow);
  table.appendChild(tfoot);
  return table;
}

/** Scalar report fields as a definition list shown above the table. */
export function renderEvalMeta(report: EvalReport): HTMLElement {
  const dl = el("dl", "eval-meta");
  const scalars: Array<[string, unknown]> = [
    ["eval_id", report.eval_id],
    ["kind", report.kind],
    ["dataset_id", report.dataset_id],
    ["n_examples", report.n_examples],
    ["n_scored", report.n_scored],
    ["failures", report.failures],
    ["wall_seconds", report.wall_seconds],
  ];
  for (const [name, value] of scalars) {
    dl.appendChild(el("dt", undefined, name));
    const dd = el("dd", undefined, String(value));
    dd.setAttribute("data-field", name);
    dl.appendChild(dd);
  }
  return dl;
}

export function renderEvalReport(report: EvalReport): HTMLElement {
  const root = el("section", "eval-result");
  root.appendChild(renderEvalMeta(report));
  root.appendChild(renderEvalTable(report));
  return root;
}

// -- shared chrome --------------------------------------------------------

/** Error toast carrying the service envelope; removed on click or timeout. */
export function showToast(host: HTMLElement, code: string, message: string, ttlMs = 6000): HTMLElement {
  const toast = el("div", "toast error");
  field(toast, "code", code);
  field(toast, "message", message);
  toast.addEventListener("click", () => toast.remove());
  host.appendChild(toast);
  if (ttlMs > 0) setTimeout(() => toast.remove(), ttlMs);
  return toast;
}
