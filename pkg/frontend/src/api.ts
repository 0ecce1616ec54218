/* Thin typed client for the ragforge HTTP service.

   Every failure surfaces as an ApiError carrying the service error
   envelope so callers can show code and message without guessing. */

import { readEventStream } from "./sse.js";
import type {
  ErrorEnvelope,
  EvalReport,
  EvalStatus,
  JobStatus,
  KbStat,
  ModelSpec,
  QueryPair,
  RunResult,
  SearchHitView,
  StreamEvent,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly details: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

const defaultFetch: FetchLike = (input, init) => globalThis.fetch(input, init);

async function envelopeFrom(res: Response): Promise<ErrorEnvelope> {
  let payload: unknown = null;
  try {
    payload = await res.json();
  } catch {
    payload = null;
  }
  const env = (payload ?? {}) as Record<string, unknown>;
  return {
    code: String(env["code"] ?? "http_error"),
    message: String(env["message"] ?? res.statusText),
    details: (env["details"] as Record<string, unknown>) ?? {},
  };
}

export class Client {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = defaultFetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.baseUrl + path, init);
    if (!res.ok) {
      const env = await envelopeFrom(res);
      throw new ApiError(res.status, env.code, env.message, env.details);
    }
    if (res.status === 204) return null as T;
    return (await res.json()) as T;
  }

  // -- model registry -----------------------------------------------------

  async listModels(): Promise<ModelSpec[]> {
    const body = await this.request<{ models: ModelSpec[] }>("GET", "/v1/models");
    return body.models;
  }

  addModel(spec: ModelSpec): Promise<ModelSpec> {
    return this.request("POST", "/v1/models", spec);
  }

  removeModel(modelId: string): Promise<null> {
    return this.request("DELETE", `/v1/models/${encodeURIComponent(modelId)}`);
  }

  // -- knowledge bases ----------------------------------------------------

  async listKbs(): Promise<KbStat[]> {
    const body = await this.request<{ knowledge_bases: KbStat[] }>("GET", "/v1/kb");
    return body.knowledge_bases;
  }

  kbStat(kbId: string): Promise<KbStat> {
    return this.request("GET", `/v1/kb/${encodeURIComponent(kbId)}`);
  }

  createKb(kbId: string, opts: { chunkSize?: number; overlapFraction?: number; embedderId?: string } = {}): Promise<Record<string, unknown>> {
    const body: Record<string, unknown> = { kb_id: kbId };
    if (opts.chunkSize !== undefined) body["chunk_size"] = opts.chunkSize;
    if (opts.overlapFraction !== undefined) body["overlap_fraction"] = opts.overlapFraction;
    if (opts.embedderId !== undefined) body["embedder_id"] = opts.embedderId;
    return this.request("POST", "/v1/kb", body);
  }

  uploadDocuments(
    kbId: string,
    filename: string,
    format: string,
    content: string,
    textColumn?: string,
  ): Promise<{ doc_ids: string[]; n_chunks: number }> {
    const body: Record<string, unknown> = { filename, format, content };
    if (textColumn !== undefined) body["text_column"] = textColumn;
    return this.request("POST", `/v1/kb/${encodeURIComponent(kbId)}/documents`, body);
  }

  buildKb(kbId: string, embedderId?: string): Promise<{ job_id: string; kb_id: string; status: string }> {
    const body = embedderId === undefined ? {} : { embedder_id: embedderId };
    return this.request("POST", `/v1/kb/${encodeURIComponent(kbId)}/build`, body);
  }

  getJob(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/v1/jobs/${encodeURIComponent(jobId)}`);
  }

  /** Poll a background job until it settles. */
  async waitForJob(
    jobId: string,
    opts: { intervalMs?: number; timeoutMs?: number } = {},
  ): Promise<JobStatus> {
    const interval = opts.intervalMs ?? 250;
    const deadline = Date.now() + (opts.timeoutMs ?? 120000);
    while (true) {
      const job = await this.getJob(jobId);
      if (job.status === "done") return job;
      if (job.status === "error") {
        throw new ApiError(500, "job_failed", job.error ?? "background job failed");
      }
      if (Date.now() > deadline) {
        throw new ApiError(0, "job_timeout", `job ${jobId} did not settle in time`);
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }

  search(body: {
    kb_id: string;
    query: string;
    k?: number;
    backend?: "exact" | "approx";
    n_probes?: number;
  }): Promise<{ hits: SearchHitView[] }> {
    return this.request("POST", "/v1/search", body);
  }

  // -- workflow runs ------------------------------------------------------

  runWorkflow(config: Record<string, unknown>, query: string): Promise<RunResult> {
    return this.request("POST", "/v1/runs", { config, query });
  }

  /** Start a streamed run and yield decoded events as they arrive. */
  async *streamRun(config: Record<string, unknown>, query: string): AsyncGenerator<StreamEvent, void, undefined> {
    const res = await this.fetchImpl(this.baseUrl + "/v1/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ config, query, stream: true }),
    });
    if (!res.ok) {
      const env = await envelopeFrom(res);
      throw new ApiError(res.status, env.code, env.message, env.details);
    }
    if (res.body === null) {
      throw new ApiError(0, "stream_unavailable", "response carried no body to read");
    }
    for await (const frame of readEventStream(res.body)) {
      yield { name: frame.event, data: JSON.parse(frame.data) as Record<string, unknown> };
    }
  }

  getTrace(runId: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/v1/runs/${encodeURIComponent(runId)}/trace`);
  }

  // -- data construction --------------------------------------------------

  synthQueries(body: {
    kb_id: string;
    generator_id: string;
    config?: Record<string, unknown>;
    limit_chunks?: number;
  }): Promise<{ pairs: QueryPair[]; stats: Record<string, unknown> }> {
    return this.request("POST", "/v1/synth/queries", body);
  }

  synthNegatives(body: {
    kb_id: string;
    pairs: Array<{ query: string; positive_chunk_id: string }>;
    config?: Record<string, unknown>;
  }): Promise<{ records: Array<Record<string, unknown>> }> {
    return this.request("POST", "/v1/synth/negatives", body);
  }

  synthDdr(body: {
    kb_id: string;
    generator_id: string;
    qa: Array<Record<string, unknown>>;
    config?: Record<string, unknown>;
  }): Promise<{ pairs: Array<Record<string, unknown>>; stats: Record<string, unknown> }> {
    return this.request("POST", "/v1/synth/ddr", body);
  }

  synthKbalign(body: {
    kb_id: string;
    generator_id: string;
    config?: Record<string, unknown>;
    n_short?: number;
    n_long?: number;
  }): Promise<{ examples: Array<Record<string, unknown>> }> {
    return this.request("POST", "/v1/synth/kbalign", body);
  }

  // -- evaluation ---------------------------------------------------------

  startEval(body: Record<string, unknown>): Promise<{ eval_id: string; status: string }> {
    return this.request("POST", "/v1/eval", body);
  }

  getEval(evalId: string): Promise<EvalStatus> {
    return this.request("GET", `/v1/eval/${encodeURIComponent(evalId)}`);
  }

  /** Poll an evaluation until it settles and return the finished report. */
  async waitForEval(
    evalId: string,
    opts: { intervalMs?: number; timeoutMs?: number } = {},
  ): Promise<EvalReport> {
    const interval = opts.intervalMs ?? 250;
    const deadline = Date.now() + (opts.timeoutMs ?? 120000);
    while (true) {
      const status = await this.getEval(evalId);
      if (status.status === "done" && status.report !== null) return status.report;
      if (status.status === "error") {
        throw new ApiError(500, "eval_failed", status.error ?? "evaluation failed");
      }
      if (Date.now() > deadline) {
        throw new ApiError(0, "eval_timeout", `evaluation ${evalId} did not settle in time`);
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }
}
