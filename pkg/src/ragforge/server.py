"""HTTP service exposing knowledge management, models, search, workflow
runs (with server-sent event streaming), data synthesis, and evaluation.

Every non-2xx response body is the uniform error envelope
{"code", "message", "details"}.  Long-running work (index builds, evals)
returns 202 plus an id to poll.  Streamed runs emit `text/event-stream`
events named retrieval, note_update, stop, generation_delta, done, error.

State outside process memory is exactly what lives under the data
directory: KB snapshots, run traces, and report files.
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response, StreamingResponse

from .config import ServiceConfig
from .errors import (
    BuildInProgress,
    ConfigError,
    DatasetValidationError,
    DuplicateKnowledgeBase,
    KnowledgeBaseNotFound,
    NotFound,
    RagforgeError,
)
from .evaluate import evaluate_generation, evaluate_retrieval
from .gateway import ModelGateway, ModelRegistry, ModelSpec
from .chunking import ChunkingConfig
from .knowledge import KnowledgeBase, parse_documents
from .records import QAExample, record_from_obj, record_to_obj
from .report_plots import write_report_files
from .retrieval import build_approx_index, search
from .synth import (
    SynthesisConfig,
    build_ddr_preferences,
    build_kbalign_sft,
    mine_hard_negatives,
    synthesize_queries,
)
from .workflows import WorkflowConfig, WorkflowEngine, WorkflowTrace


def _require(payload: dict, key: str):
    if key not in payload:
        raise ConfigError(f"request body needs {key!r}")
    return payload[key]


def _qa_from_objs(objs: list) -> list[QAExample]:
    issues: list = []
    records = [record_from_obj("qa", obj, i + 1, issues)
               for i, obj in enumerate(objs)]
    if issues:
        raise DatasetValidationError("request dataset", issues)
    return records


def build_app(config: ServiceConfig, registry: ModelRegistry | None = None,
              gateway: ModelGateway | None = None) -> FastAPI:
    config.ensure_layout()
    if registry is None:
        if config.models_path and config.models_path.exists():
            registry = ModelRegistry.from_toml(config.models_path)
        else:
            registry = ModelRegistry()
    if gateway is None:
        gateway = ModelGateway(registry)

    executor = ThreadPoolExecutor(max_workers=4)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        executor.shutdown(wait=True)

    app = FastAPI(title="ragforge", docs_url=None, redoc_url=None,
                  lifespan=lifespan)
    state = app.state
    state.config = config
    state.registry = registry
    state.gateway = gateway
    state.kbs = {}
    state.approx = {}
    state.jobs = {}
    state.building = set()
    state.lock = threading.Lock()
    state.executor = executor

    for snap in sorted(config.kb_dir.glob("*.snap")):
        kb = KnowledgeBase.load_snapshot(snap)
        state.kbs[kb.kb_id] = kb

    def kb_lookup(kb_id: str) -> KnowledgeBase:
        try:
            return state.kbs[kb_id]
        except KeyError:
            raise KnowledgeBaseNotFound(f"no knowledge base {kb_id!r}") from None

    state.engine = WorkflowEngine(kb_lookup, gateway, trace_dir=config.runs_dir)

    # -- error envelope ----------------------------------------------------

    @app.exception_handler(RagforgeError)
    async def _ragforge_error(request: Request, exc: RagforgeError):
        details = dict(exc.details)
        if isinstance(exc, DatasetValidationError):
            details["issues"] = [dataclasses.asdict(i) for i in exc.issues]
        return JSONResponse(status_code=exc.http_status, content={
            "code": exc.code, "message": exc.message, "details": details})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={
            "code": "validation_error", "message": "request body is not valid",
            "details": {"errors": [str(e) for e in exc.errors()]}})

    @app.exception_handler(Exception)
    async def _unhandled(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={
            "code": "internal_error", "message": str(exc), "details": {}})

    # -- jobs --------------------------------------------------------------

    def submit_job(kind: str, fn) -> str:
        job_id = f"{kind}-{uuid.uuid4().hex[:10]}"
        with state.lock:
            state.jobs[job_id] = {"job_id": job_id, "kind": kind,
                                  "status": "pending", "error": None,
                                  "result": None}

        def body():
            with state.lock:
                state.jobs[job_id]["status"] = "running"
            try:
                result = fn()
            except RagforgeError as exc:
                with state.lock:
                    state.jobs[job_id].update(status="failed", error={
                        "code": exc.code, "message": exc.message})
            except Exception as exc:
                with state.lock:
                    state.jobs[job_id].update(status="failed", error={
                        "code": "internal_error", "message": str(exc)})
            else:
                with state.lock:
                    state.jobs[job_id].update(status="done", result=result)

        state.executor.submit(body)
        return job_id

    def job_state(job_id: str) -> dict:
        with state.lock:
            if job_id not in state.jobs:
                raise NotFound(f"no job {job_id!r}")
            return dict(state.jobs[job_id])

    # -- knowledge bases ---------------------------------------------------

    @app.post("/v1/kb", status_code=201)
    def create_kb(payload: dict):
        kb_id = _require(payload, "kb_id")
        with state.lock:
            if kb_id in state.kbs:
                raise DuplicateKnowledgeBase(f"knowledge base {kb_id!r} exists")
            kb = KnowledgeBase(
                kb_id,
                ChunkingConfig(payload.get("chunk_size", 512),
                               payload.get("overlap_fraction", 0.15)),
                payload.get("embedder_id", ""))
            state.kbs[kb_id] = kb
        return {"kb_id": kb.kb_id, "chunk_size": kb.chunking.chunk_size,
                "overlap_fraction": kb.chunking.overlap_fraction,
                "embedder_id": kb.embedder_id, "index_state": kb.index_state}

    @app.get("/v1/kb")
    def list_kbs():
        with state.lock:
            return {"knowledge_bases": [state.kbs[k].stat()
                                        for k in sorted(state.kbs)]}

    @app.get("/v1/kb/{kb_id}")
    def kb_stat(kb_id: str):
        return kb_lookup(kb_id).stat()

    @app.post("/v1/kb/{kb_id}/documents")
    def upload_documents(kb_id: str, payload: dict):
        kb = kb_lookup(kb_id)
        docs = parse_documents(
            name=_require(payload, "filename").rsplit(".", 1)[0],
            format=_require(payload, "format"),
            raw=_require(payload, "content"),
            text_column=payload.get("text_column"))
        with state.lock:
            doc_ids = kb.add_documents(docs)
        return {"doc_ids": doc_ids, "n_chunks": len(kb.chunks)}

    @app.post("/v1/kb/{kb_id}/build", status_code=202)
    def build_kb(kb_id: str, payload: dict | None = None):
        kb = kb_lookup(kb_id)
        if payload and "embedder_id" in payload:
            kb.embedder_id = payload["embedder_id"]
        with state.lock:
            if kb_id in state.building:
                raise BuildInProgress(f"knowledge base {kb_id!r} is building")
            state.building.add(kb_id)

        def run_build():
            try:
                summary = kb.build_index(gateway)
                kb.save_snapshot(config.kb_dir / f"{kb_id}.snap")
                return summary
            finally:
                with state.lock:
                    state.building.discard(kb_id)

        job_id = submit_job("build", run_build)
        return {"job_id": job_id, "kb_id": kb_id, "status": "pending"}

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        return job_state(job_id)

    # -- models ------------------------------------------------------------

    @app.get("/v1/models")
    def list_models():
        return {"models": [dataclasses.asdict(s) for s in registry.list()]}

    @app.post("/v1/models", status_code=201)
    def add_model(payload: dict):
        allowed = {f.name for f in dataclasses.fields(ModelSpec)}
        unknown = set(payload) - allowed
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        spec = ModelSpec(**payload)
        registry.register(spec)
        return dataclasses.asdict(spec)

    @app.delete("/v1/models/{model_id}", status_code=204)
    def remove_model(model_id: str):
        registry.remove(model_id)
        return Response(status_code=204)

    # -- search ------------------------------------------------------------

    @app.post("/v1/search")
    def search_route(payload: dict):
        kb = kb_lookup(_require(payload, "kb_id"))
        backend = payload.get("backend", "exact")
        approx = None
        if backend == "approx":
            with state.lock:
                approx = state.approx.get(kb.kb_id)
            if approx is None:
                approx = build_approx_index(kb)
                with state.lock:
                    state.approx[kb.kb_id] = approx
        hits = search(kb, gateway, _require(payload, "query"),
                      payload.get("k", 5), backend=backend, approx_index=approx,
                      n_probes=payload.get("n_probes"))
        return {"hits": [{"chunk_id": h.chunk_id, "score": h.score,
                          "rank": h.rank, "text": kb.chunk(h.chunk_id).text}
                         for h in hits]}

    # -- workflow runs -----------------------------------------------------

    @app.post("/v1/runs")
    def start_run(payload: dict):
        cfg = WorkflowConfig.from_obj(_require(payload, "config"))
        query = _require(payload, "query")
        run_id = f"run-{uuid.uuid4().hex[:12]}"
        if payload.get("stream", False):
            def event_stream():
                for name, data in state.engine.stream(cfg, query, run_id):
                    yield (f"event: {name}\n"
                           f"data: {json.dumps(data, ensure_ascii=False)}\n\n")

            return StreamingResponse(event_stream(), media_type="text/event-stream")
        answer, trace = state.engine.run(cfg, query, run_id)
        return {"run_id": run_id, "final_answer": answer,
                "trace": trace.to_dict()}

    @app.get("/v1/runs/{run_id}/trace")
    def get_trace(run_id: str):
        return WorkflowTrace.load(config.runs_dir, run_id).to_dict()

    # -- data construction -------------------------------------------------

    @app.post("/v1/synth/queries")
    def synth_queries(payload: dict):
        kb = kb_lookup(_require(payload, "kb_id"))
        cfg = SynthesisConfig.from_obj(payload.get("config", {}))
        pairs, stats = synthesize_queries(
            kb, gateway, _require(payload, "generator_id"), cfg,
            limit_chunks=payload.get("limit_chunks"))
        return {"pairs": [{"query": q, "source_chunk_id": cid}
                          for q, cid in pairs],
                "stats": stats}

    @app.post("/v1/synth/negatives")
    def synth_negatives(payload: dict):
        kb = kb_lookup(_require(payload, "kb_id"))
        cfg = SynthesisConfig.from_obj(payload.get("config", {}))
        pairs = [(p["query"], p["positive_chunk_id"])
                 for p in _require(payload, "pairs")]
        records = mine_hard_negatives(kb, gateway, pairs, cfg)
        return {"records": [record_to_obj(r) for r in records]}

    @app.post("/v1/synth/ddr")
    def synth_ddr(payload: dict):
        kb = kb_lookup(_require(payload, "kb_id"))
        cfg = SynthesisConfig.from_obj(payload.get("config", {}))
        qa = _qa_from_objs(_require(payload, "qa"))
        pairs, stats = build_ddr_preferences(
            kb, gateway, qa, _require(payload, "generator_id"), cfg)
        return {"pairs": [record_to_obj(p) for p in pairs], "stats": stats}

    @app.post("/v1/synth/kbalign")
    def synth_kbalign(payload: dict):
        kb = kb_lookup(_require(payload, "kb_id"))
        cfg = SynthesisConfig.from_obj(payload.get("config", {}))
        examples = build_kbalign_sft(
            kb, gateway, _require(payload, "generator_id"), cfg,
            n_short=payload.get("n_short", 0), n_long=payload.get("n_long", 0))
        return {"examples": [record_to_obj(e) for e in examples]}

    # -- evaluation --------------------------------------------------------

    @app.post("/v1/eval", status_code=202)
    def start_eval(payload: dict):
        kind = _require(payload, "kind")
        if kind not in ("retrieval", "generation"):
            raise ConfigError(f"unknown eval kind {kind!r}")
        dataset = _qa_from_objs(_require(payload, "dataset"))
        dataset_id = payload.get("dataset_id", "request")
        if kind == "retrieval":
            kb = kb_lookup(_require(payload, "kb_id"))
            k = payload.get("k", 10)
            query_embedder_id = payload.get("query_embedder_id")

            def run_eval(eval_id):
                return evaluate_retrieval(
                    kb, gateway, dataset, k=k, dataset_id=dataset_id,
                    eval_id=eval_id, query_embedder_id=query_embedder_id)
        else:
            cfg = WorkflowConfig.from_obj(_require(payload, "workflow_config"))
            kb_lookup(cfg.kb_id)  # fail fast before 202

            def run_eval(eval_id):
                return evaluate_generation(
                    state.engine, cfg, dataset, dataset_id=dataset_id,
                    eval_id=eval_id)

        eval_id = f"eval-{uuid.uuid4().hex[:10]}"

        def body():
            report = run_eval(eval_id)
            out_dir = config.reports_dir / eval_id
            write_report_files(report, out_dir / "report.json")
            return report.to_dict()

        job_id = submit_job("eval", body)
        with state.lock:
            state.jobs[job_id]["eval_id"] = eval_id
            state.jobs[f"alias:{eval_id}"] = state.jobs[job_id]
        return {"eval_id": eval_id, "status": "pending"}

    @app.get("/v1/eval/{eval_id}")
    def get_eval(eval_id: str):
        with state.lock:
            job = state.jobs.get(f"alias:{eval_id}")
            job = dict(job) if job else None
        if job is None:
            raise NotFound(f"no eval {eval_id!r}")
        return {"eval_id": eval_id, "status": job["status"],
                "error": job["error"], "report": job["result"]}

    return app
