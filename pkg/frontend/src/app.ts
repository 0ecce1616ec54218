/* Page shell: four pages wired to the service client.

   Settings manages the model registry and knowledge bases, Chat streams
   workflow runs into the timeline, Data Construction launches synthesis
   jobs and offers the results as downloads, Evaluation launches evals
   and shows the finished report table. */

import { ApiError, Client } from "./api.js";
import { applyEvent, markDisconnected, newSession } from "./timeline.js";
import type { SessionView } from "./timeline.js";
import { renderEvalReport, renderTimeline, showToast } from "./views.js";

interface Ctx {
  client: Client;
  toastHost: HTMLElement;
}

const PAGES = ["settings", "chat", "data", "eval"] as const;

const PAGE_LABELS: Record<(typeof PAGES)[number], string> = {
  settings: "Global Settings",
  chat: "Chat",
  data: "Data Construction",
  eval: "Evaluation",
};

function fail(ctx: Ctx, err: unknown): void {
  if (err instanceof ApiError) showToast(ctx.toastHost, err.code, err.message);
  else showToast(ctx.toastHost, "client_error", String(err));
}

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

function labeled(text: string, input: HTMLElement): HTMLLabelElement {
  const label = el("label");
  label.appendChild(el("span", undefined, text));
  label.appendChild(input);
  return label;
}

function textInput(name: string, value = "", placeholder = ""): HTMLInputElement {
  const input = el("input");
  input.type = "text";
  input.name = name;
  input.value = value;
  input.placeholder = placeholder;
  return input;
}

function numberInput(name: string, value: number, step = 1): HTMLInputElement {
  const input = el("input");
  input.type = "number";
  input.name = name;
  input.value = String(value);
  input.step = String(step);
  return input;
}

function select(name: string, options: string[]): HTMLSelectElement {
  const node = el("select");
  node.name = name;
  for (const option of options) {
    const opt = el("option", undefined, option);
    opt.value = option;
    node.appendChild(opt);
  }
  return node;
}

function button(text: string, onClick: () => void): HTMLButtonElement {
  const node = el("button", undefined, text);
  node.type = "button";
  node.addEventListener("click", onClick);
  return node;
}

function downloadLink(filename: string, lines: Array<Record<string, unknown>>): HTMLAnchorElement {
  const body = lines.map((obj) => JSON.stringify(obj)).join("\n") + "\n";
  const link = el("a", "download", `download ${filename} (${lines.length} records)`);
  link.href = URL.createObjectURL(new Blob([body], { type: "application/jsonl" }));
  link.download = filename;
  return link;
}

// -- settings -------------------------------------------------------------

function settingsPage(ctx: Ctx): HTMLElement {
  const root = el("section", "page settings");
  root.appendChild(el("h2", undefined, PAGE_LABELS.settings));

  const modelList = el("ul", "model-list");
  const kbList = el("ul", "kb-list");

  async function refresh(): Promise<void> {
    try {
      const models = await ctx.client.listModels();
      modelList.textContent = "";
      for (const spec of models) {
        const li = el("li", "model");
        li.appendChild(el("span", "model-id", spec.model_id));
        li.appendChild(el("span", "model-role", spec.role));
        li.appendChild(el("span", "model-kind", spec.kind));
        li.appendChild(button("remove", async () => {
          try {
            await ctx.client.removeModel(spec.model_id);
            await refresh();
          } catch (err) {
            fail(ctx, err);
          }
        }));
        modelList.appendChild(li);
      }
      const kbs = await ctx.client.listKbs();
      kbList.textContent = "";
      for (const kb of kbs) {
        const li = el("li", "kb");
        li.appendChild(el("span", "kb-id", kb.kb_id));
        li.appendChild(el("span", "kb-stat",
          `${kb.n_documents} docs, ${kb.n_chunks} chunks`));
        const chip = el("span", "kb-state", kb.index_state);
        li.appendChild(chip);
        li.appendChild(button("build index", async () => {
          try {
            const accepted = await ctx.client.buildKb(kb.kb_id);
            chip.textContent = "building";
            await ctx.client.waitForJob(accepted.job_id);
            await refresh();
          } catch (err) {
            fail(ctx, err);
          }
        }));
        kbList.appendChild(li);
      }
    } catch (err) {
      fail(ctx, err);
    }
  }

  const modelForm = el("form", "add-model");
  const modelId = textInput("model_id", "", "model id");
  const role = select("role", ["embedder", "reranker", "generator"]);
  const kind = select("kind", ["http_endpoint", "mock"]);
  const endpoint = textInput("endpoint_url", "", "http://host/v1/embeddings");
  const dim = numberInput("dim", 8);
  modelForm.appendChild(labeled("model id", modelId));
  modelForm.appendChild(labeled("role", role));
  modelForm.appendChild(labeled("kind", kind));
  modelForm.appendChild(labeled("endpoint url", endpoint));
  modelForm.appendChild(labeled("dim", dim));
  modelForm.appendChild(button("register model", async () => {
    try {
      await ctx.client.addModel({
        model_id: modelId.value,
        role: role.value as "embedder" | "reranker" | "generator",
        kind: kind.value,
        endpoint_url: endpoint.value === "" ? null : endpoint.value,
        dim: role.value === "embedder" ? Number(dim.value) : null,
      });
      await refresh();
    } catch (err) {
      fail(ctx, err);
    }
  }));

  const kbForm = el("form", "add-kb");
  const kbId = textInput("kb_id", "", "kb id");
  const chunkSize = numberInput("chunk_size", 512);
  const overlap = numberInput("overlap_fraction", 0.15, 0.01);
  const embedderId = textInput("embedder_id", "", "embedder model id");
  kbForm.appendChild(labeled("kb id", kbId));
  kbForm.appendChild(labeled("chunk size (tokens)", chunkSize));
  kbForm.appendChild(labeled("overlap fraction", overlap));
  kbForm.appendChild(labeled("embedder", embedderId));
  kbForm.appendChild(button("create kb", async () => {
    try {
      await ctx.client.createKb(kbId.value, {
        chunkSize: Number(chunkSize.value),
        overlapFraction: Number(overlap.value),
        embedderId: embedderId.value,
      });
      await refresh();
    } catch (err) {
      fail(ctx, err);
    }
  }));

  const uploadForm = el("form", "upload-docs");
  const uploadKb = textInput("kb_id", "", "kb id");
  const fileInput = el("input");
  fileInput.type = "file";
  uploadForm.appendChild(labeled("kb id", uploadKb));
  uploadForm.appendChild(labeled("documents file (jsonl, csv, txt, md)", fileInput));
  uploadForm.appendChild(button("upload", async () => {
    const file = fileInput.files?.[0];
    if (file === undefined) return;
    const format = (file.name.split(".").pop() ?? "txt").toLowerCase();
    try {
      const text = await file.text();
      const out = await ctx.client.uploadDocuments(uploadKb.value, file.name, format, text);
      showToast(ctx.toastHost, "uploaded", `${out.doc_ids.length} docs, ${out.n_chunks} chunks`);
      await refresh();
    } catch (err) {
      fail(ctx, err);
    }
  }));

  root.appendChild(el("h3", undefined, "Models"));
  root.appendChild(modelList);
  root.appendChild(modelForm);
  root.appendChild(el("h3", undefined, "Knowledge bases"));
  root.appendChild(kbList);
  root.appendChild(kbForm);
  root.appendChild(uploadForm);
  void refresh();
  return root;
}

// -- chat -----------------------------------------------------------------

function chatPage(ctx: Ctx): HTMLElement {
  const root = el("section", "page chat");
  root.appendChild(el("h2", undefined, PAGE_LABELS.chat));

  const workflow = select("workflow", ["vanilla", "deepnote"]);
  const kbId = textInput("kb_id", "", "kb id");
  const generatorId = textInput("generator_id", "", "generator model id");
  const k = numberInput("k", 5);
  const maxIterations = numberInput("max_iterations", 3);
  const query = textInput("query", "", "ask the knowledge base");
  const timelineHost = el("div", "timeline-host");

  let lastConfig: Record<string, unknown> | null = null;
  let lastQuery = "";
  let streaming = false;

  function redraw(view: SessionView): void {
    timelineHost.textContent = "";
    timelineHost.appendChild(renderTimeline(view));
    if (view.state === "error") {
      timelineHost.appendChild(button("reconnect", () => {
        if (lastConfig !== null) void run(lastConfig, lastQuery);
      }));
    }
  }

  // one live stream per session: further run clicks are ignored until
  // the current stream reaches a terminal state
  async function run(config: Record<string, unknown>, text: string): Promise<void> {
    if (streaming) return;
    streaming = true;
    lastConfig = config;
    lastQuery = text;
    let view = newSession(text);
    redraw(view);
    try {
      for await (const ev of ctx.client.streamRun(config, text)) {
        view = applyEvent(view, ev);
        redraw(view);
      }
      if (view.state !== "done" && view.state !== "error") {
        view = markDisconnected(view, "stream closed before a terminal event");
        redraw(view);
      }
    } catch (err) {
      fail(ctx, err);
      view = markDisconnected(view, err instanceof ApiError ? err.message : String(err));
      redraw(view);
    } finally {
      streaming = false;
    }
  }

  const form = el("form", "chat-form");
  form.appendChild(labeled("workflow", workflow));
  form.appendChild(labeled("kb", kbId));
  form.appendChild(labeled("generator", generatorId));
  form.appendChild(labeled("k", k));
  form.appendChild(labeled("max iterations", maxIterations));
  form.appendChild(labeled("query", query));
  form.appendChild(button("run", () => {
    void run({
      workflow: workflow.value,
      kb_id: kbId.value,
      generator_id: generatorId.value,
      k: Number(k.value),
      max_iterations: Number(maxIterations.value),
    }, query.value);
  }));

  root.appendChild(form);
  root.appendChild(timelineHost);
  return root;
}

// -- data construction ----------------------------------------------------

function dataPage(ctx: Ctx): HTMLElement {
  const root = el("section", "page data");
  root.appendChild(el("h2", undefined, PAGE_LABELS.data));

  const kbId = textInput("kb_id", "", "kb id");
  const generatorId = textInput("generator_id", "", "generator model id");
  const results = el("div", "synth-results");

  function show(title: string, filename: string, records: Array<Record<string, unknown>>, stats?: Record<string, unknown>): void {
    const box = el("article", "synth-result");
    box.appendChild(el("h4", undefined, title));
    if (stats !== undefined) box.appendChild(el("pre", "stats", JSON.stringify(stats, null, 2)));
    box.appendChild(downloadLink(filename, records));
    results.prepend(box);
  }

  const form = el("form", "synth-form");
  form.appendChild(labeled("kb", kbId));
  form.appendChild(labeled("generator", generatorId));

  form.appendChild(button("synthesize queries + hard negatives", async () => {
    try {
      const q = await ctx.client.synthQueries({ kb_id: kbId.value, generator_id: generatorId.value });
      show("synthetic queries", "queries.jsonl",
        q.pairs.map((p) => ({ query: p.query, source_chunk_id: p.source_chunk_id })),
        q.stats);
      const n = await ctx.client.synthNegatives({
        kb_id: kbId.value,
        pairs: q.pairs.map((p) => ({ query: p.query, positive_chunk_id: p.source_chunk_id })),
      });
      show("retrieval pairs with hard negatives", "retrieval_pairs.jsonl", n.records);
    } catch (err) {
      fail(ctx, err);
    }
  }));

  const qaText = el("textarea");
  qaText.name = "qa";
  qaText.placeholder = '{"example_id": "...", "query": "...", "answers": ["..."], "gold_chunk_ids": ["..."]}';
  form.appendChild(labeled("qa dataset (jsonl) for preference pairs", qaText));
  form.appendChild(button("build preference pairs", async () => {
    try {
      const qa = qaText.value.split("\n").filter((line) => line.trim() !== "")
        .map((line) => JSON.parse(line) as Record<string, unknown>);
      const out = await ctx.client.synthDdr({ kb_id: kbId.value, generator_id: generatorId.value, qa });
      show("preference pairs", "preferences.jsonl", out.pairs, out.stats);
    } catch (err) {
      fail(ctx, err);
    }
  }));

  const nShort = numberInput("n_short", 8);
  const nLong = numberInput("n_long", 4);
  form.appendChild(labeled("short-answer examples", nShort));
  form.appendChild(labeled("long-answer examples", nLong));
  form.appendChild(button("build adaptation sft set", async () => {
    try {
      const out = await ctx.client.synthKbalign({
        kb_id: kbId.value,
        generator_id: generatorId.value,
        n_short: Number(nShort.value),
        n_long: Number(nLong.value),
      });
      show("adaptation sft examples", "sft.jsonl", out.examples);
    } catch (err) {
      fail(ctx, err);
    }
  }));

  root.appendChild(form);
  root.appendChild(results);
  return root;
}

// -- evaluation -----------------------------------------------------------

function evalPage(ctx: Ctx): HTMLElement {
  const root = el("section", "page eval");
  root.appendChild(el("h2", undefined, PAGE_LABELS.eval));

  const kind = select("kind", ["retrieval", "generation"]);
  const datasetId = textInput("dataset_id", "", "dataset id");
  const dataset = el("textarea");
  dataset.name = "dataset";
  dataset.placeholder = '{"example_id": "...", "query": "...", "answers": ["..."], "gold_chunk_ids": ["..."]}';
  const kbId = textInput("kb_id", "", "kb id");
  const k = numberInput("k", 10);
  const workflow = select("workflow", ["vanilla", "deepnote"]);
  const generatorId = textInput("generator_id", "", "generator model id");
  const reportHost = el("div", "report-host");
  const status = el("p", "eval-status", "");

  const form = el("form", "eval-form");
  form.appendChild(labeled("kind", kind));
  form.appendChild(labeled("dataset id", datasetId));
  form.appendChild(labeled("dataset (jsonl)", dataset));
  form.appendChild(labeled("kb", kbId));
  form.appendChild(labeled("k", k));
  form.appendChild(labeled("workflow (generation only)", workflow));
  form.appendChild(labeled("generator (generation only)", generatorId));
  form.appendChild(button("launch evaluation", async () => {
    try {
      const rows = dataset.value.split("\n").filter((line) => line.trim() !== "")
        .map((line) => JSON.parse(line) as Record<string, unknown>);
      const body: Record<string, unknown> = {
        kind: kind.value,
        dataset: rows,
        dataset_id: datasetId.value === "" ? "console" : datasetId.value,
      };
      if (kind.value === "retrieval") {
        body["kb_id"] = kbId.value;
        body["k"] = Number(k.value);
      } else {
        body["workflow_config"] = {
          workflow: workflow.value,
          kb_id: kbId.value,
          generator_id: generatorId.value,
          k: Number(k.value),
        };
      }
      const accepted = await ctx.client.startEval(body);
      status.textContent = `evaluation ${accepted.eval_id}: running`;
      const report = await ctx.client.waitForEval(accepted.eval_id);
      status.textContent = `evaluation ${accepted.eval_id}: done`;
      reportHost.textContent = "";
      reportHost.appendChild(renderEvalReport(report));
    } catch (err) {
      status.textContent = "";
      fail(ctx, err);
    }
  }));

  root.appendChild(form);
  root.appendChild(status);
  root.appendChild(reportHost);
  return root;
}

// -- shell ----------------------------------------------------------------

const PAGE_BUILDERS: Record<(typeof PAGES)[number], (ctx: Ctx) => HTMLElement> = {
  settings: settingsPage,
  chat: chatPage,
  data: dataPage,
  eval: evalPage,
};

export function mount(root: HTMLElement, client: Client): void {
  const toastHost = el("div", "toast-host");
  const ctx: Ctx = { client, toastHost };
  const nav = el("nav");
  const main = el("main");

  function goto(page: (typeof PAGES)[number]): void {
    main.textContent = "";
    main.appendChild(PAGE_BUILDERS[page](ctx));
  }

  for (const page of PAGES) {
    nav.appendChild(button(PAGE_LABELS[page], () => goto(page)));
  }
  root.textContent = "";
  root.appendChild(nav);
  root.appendChild(main);
  root.appendChild(toastHost);
  goto("settings");
}

function autoMount(): void {
  const root = document.getElementById("app");
  if (root === null) return;
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? window.location.origin;
  mount(root, new Client(base));
}

if (typeof document !== "undefined" && document.getElementById("app") !== null) {
  autoMount();
}
