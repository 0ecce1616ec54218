/* Shapes the service sends over HTTP.  The console displays these verbatim;
   it never recomputes a score, metric, or rank on its own. */

export interface ErrorEnvelope {
  code: string;
  message: string;
  details: Record<string, unknown>;
}

export interface ModelSpec {
  model_id: string;
  role: "embedder" | "reranker" | "generator";
  kind: string;
  endpoint_url?: string | null;
  api_key_env?: string | null;
  api_name?: string | null;
  dim?: number | null;
  max_context_tokens?: number;
  seed?: number;
}

export interface KbStat {
  kb_id: string;
  n_documents: number;
  n_chunks: number;
  index_state: string;
  embedding_dim: number | null;
  embedder_id: string;
  chunk_size: number;
  overlap_fraction: number;
}

export interface SearchHitView {
  chunk_id: string;
  score: number;
  rank: number;
  text: string;
}

/** One decoded frame from the run stream: SSE event name plus parsed data. */
export interface StreamEvent {
  name: string;
  data: Record<string, unknown>;
}

export interface RunResult {
  run_id: string;
  final_answer: string;
  trace: Record<string, unknown>;
}

export interface JobStatus {
  job_id: string;
  kind: string;
  status: "pending" | "running" | "done" | "error";
  error: string | null;
  result: Record<string, unknown> | null;
}

export interface QueryPair {
  query: string;
  source_chunk_id: string;
}

export interface EvalReport {
  eval_id: string;
  kind: string;
  dataset_id: string;
  config: Record<string, unknown>;
  metrics: Record<string, number>;
  n_examples: number;
  n_scored: number;
  failures: number;
  rows: Array<Record<string, unknown>>;
  wall_seconds: number;
}

export interface EvalStatus {
  eval_id: string;
  status: "pending" | "running" | "done" | "error";
  error: string | null;
  report: EvalReport | null;
}
