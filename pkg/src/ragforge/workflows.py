"""Inference workflows and their event traces.

Both workflows end with a stop event followed by exactly one generation
event carrying the final answer, so every trace reads as: evidence
gathering, a stop decision, then the answer.

  vanilla    retrieval, stop(single_pass), generation
  deepnote   per iteration a retrieval and a note_update; the reviewer's
             KEEP verdict stops with no_new_info, the iteration cap stops
             with max_iterations; then the answer is generated from the
             accumulated note

Review and query-refinement generations are internal steps and do not
appear as trace events.  Streaming replays the trace events in order, then
token deltas of the final answer, then done; a stream consumer sees exactly
what the persisted trace records.
"""

from __future__ import annotations

import dataclasses
import json
import re
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

from .errors import ConfigError, MalformedVerdict, NotFound, RagforgeError
from .gateway import GenerationRequest, ModelGateway, split_deltas
from .knowledge import KnowledgeBase
from .retrieval import SearchHit, search
from .templates import DEFAULT_TEMPLATE_IDS, render, render_context
from .tokenizer import default_tokenizer

WORKFLOWS = ("vanilla", "deepnote")

_VERDICT_RE = re.compile(r"^\s*VERDICT:\s*(KEEP|UPDATE)\s*$", re.MULTILINE)

SNIPPET_TOKENS = 20


@dataclass(frozen=True)
class WorkflowConfig:
    workflow: str
    kb_id: str
    generator_id: str
    embedder_id: str | None = None   # override for query embedding (model swap)
    reranker_id: str | None = None
    k: int = 5
    max_iterations: int = 3
    max_tokens: int = 512
    prompt_template_ids: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.workflow not in WORKFLOWS:
            raise ConfigError(f"unknown workflow {self.workflow!r}")
        if not self.kb_id:
            raise ConfigError("kb_id must be non-empty")
        if not self.generator_id:
            raise ConfigError("generator_id must be non-empty")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")

    def template_id(self, step: str) -> str:
        return self.prompt_template_ids.get(step, DEFAULT_TEMPLATE_IDS[step])

    @classmethod
    def from_obj(cls, obj: dict) -> "WorkflowConfig":
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"unknown workflow config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class TraceEvent:
    kind: str  # retrieval | note_update | generation | stop
    payload: dict

    def to_obj(self) -> dict:
        return {"kind": self.kind, **self.payload}


@dataclass
class WorkflowTrace:
    run_id: str
    workflow: str
    query: str
    events: list[TraceEvent]
    final_answer: str

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "workflow": self.workflow,
            "query": self.query,
            "final_answer": self.final_answer,
            "events": [e.to_obj() for e in self.events],
        }

    def save(self, trace_dir: str | Path) -> Path:
        """One JSONL file per run: a header line, then one line per event."""
        path = Path(trace_dir) / f"{self.run_id}.jsonl"
        header = {"run_id": self.run_id, "workflow": self.workflow,
                  "query": self.query, "final_answer": self.final_answer}
        with path.open("w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(header, ensure_ascii=False) + "\n")
            for event in self.events:
                f.write(json.dumps(event.to_obj(), ensure_ascii=False) + "\n")
        return path

    @classmethod
    def load(cls, trace_dir: str | Path, run_id: str) -> "WorkflowTrace":
        path = Path(trace_dir) / f"{run_id}.jsonl"
        if not path.exists():
            raise NotFound(f"no trace for run {run_id!r}")
        lines = path.read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        events = []
        for line in lines[1:]:
            obj = json.loads(line)
            kind = obj.pop("kind")
            events.append(TraceEvent(kind=kind, payload=obj))
        return cls(run_id=header["run_id"], workflow=header["workflow"],
                   query=header["query"], events=events,
                   final_answer=header["final_answer"])


def _snippet(text: str) -> str:
    return " ".join(default_tokenizer(text)[:SNIPPET_TOKENS])


def _hits_payload(kb: KnowledgeBase, hits: list[SearchHit]) -> list[dict]:
    return [{"chunk_id": h.chunk_id, "score": h.score, "rank": h.rank,
             "snippet": _snippet(kb.chunk(h.chunk_id).text)} for h in hits]


class WorkflowEngine:
    """Runs workflows against a KB resolver and a model gateway."""

    def __init__(self, kb_lookup: Callable[[str], KnowledgeBase],
                 gateway: ModelGateway, trace_dir: str | Path | None = None):
        self.kb_lookup = kb_lookup
        self.gateway = gateway
        self.trace_dir = Path(trace_dir) if trace_dir else None

    def run(self, cfg: WorkflowConfig, query: str,
            run_id: str | None = None) -> tuple[str, WorkflowTrace]:
        run_id = run_id or f"run-{uuid.uuid4().hex[:12]}"
        kb = self.kb_lookup(cfg.kb_id)
        if cfg.workflow == "vanilla":
            events, answer = self._run_vanilla(kb, cfg, query)
        else:
            events, answer = self._run_deepnote(kb, cfg, query)
        trace = WorkflowTrace(run_id=run_id, workflow=cfg.workflow, query=query,
                              events=events, final_answer=answer)
        if self.trace_dir is not None:
            self.trace_dir.mkdir(parents=True, exist_ok=True)
            trace.save(self.trace_dir)
        return answer, trace

    def stream(self, cfg: WorkflowConfig, query: str,
               run_id: str | None = None) -> Iterator[tuple[str, dict]]:
        """(event_name, payload) pairs: the trace events in order, then
        generation_delta pieces of the answer, then done.  Failures emit a
        single error event and end the stream; nothing is persisted."""
        try:
            answer, trace = self.run(cfg, query, run_id)
        except RagforgeError as exc:
            yield "error", {"code": exc.code, "message": str(exc)}
            return
        for event in trace.events:
            if event.kind == "generation":
                continue  # streamed as deltas instead
            yield event.kind, event.payload
        for piece in split_deltas(answer):
            yield "generation_delta", {"text": piece}
        yield "done", {"run_id": trace.run_id, "final_answer": answer}

    # -- workflow bodies ---------------------------------------------------

    def _generate(self, cfg: WorkflowConfig, prompt: str,
                  temperature: float = 0.0) -> str:
        return self.gateway.generate(cfg.generator_id, GenerationRequest(
            prompt=prompt, temperature=temperature, max_tokens=cfg.max_tokens))

    def _search(self, kb: KnowledgeBase, cfg: WorkflowConfig,
                query: str) -> list[SearchHit]:
        return search(kb, self.gateway, query, cfg.k,
                      query_embedder_id=cfg.embedder_id)

    def _run_vanilla(self, kb: KnowledgeBase, cfg: WorkflowConfig,
                     query: str) -> tuple[list[TraceEvent], str]:
        hits = self._search(kb, cfg, query)
        events = [TraceEvent("retrieval", {
            "query": query, "hits": _hits_payload(kb, hits)})]
        template_id = cfg.template_id("rag_answer")
        context = render_context([(h.chunk_id, kb.chunk(h.chunk_id).text)
                                  for h in hits])
        answer = self._generate(cfg, render(template_id, context=context, query=query))
        events.append(TraceEvent("stop", {"reason": "single_pass", "iterations": 1}))
        events.append(TraceEvent("generation", {
            "prompt_template_id": template_id, "text": answer}))
        return events, answer

    def _run_deepnote(self, kb: KnowledgeBase, cfg: WorkflowConfig,
                      query: str) -> tuple[list[TraceEvent], str]:
        events: list[TraceEvent] = []
        note = ""
        revision = 0
        current_query = query
        stop_reason = "max_iterations"
        iterations = 0
        for i in range(1, cfg.max_iterations + 1):
            iterations = i
            hits = self._search(kb, cfg, current_query)
            events.append(TraceEvent("retrieval", {
                "query": current_query, "hits": _hits_payload(kb, hits)}))
            context = render_context([(h.chunk_id, kb.chunk(h.chunk_id).text)
                                      for h in hits])
            review = self._generate(cfg, render(
                cfg.template_id("deepnote_review"),
                note=note, context=context, query=query))
            m = _VERDICT_RE.search(review)
            if not m:
                raise MalformedVerdict(iteration=i, output=review)
            accepted = m.group(1) == "UPDATE"
            old_revision = revision
            if accepted:
                note = review[m.end():].strip()
                revision += 1
            events.append(TraceEvent("note_update", {
                "old_revision": old_revision, "new_revision": revision,
                "accepted": accepted, "note": note}))
            if not accepted:
                stop_reason = "no_new_info"
                break
            if i == cfg.max_iterations:
                break
            current_query = self._generate(cfg, render(
                cfg.template_id("deepnote_refine"),
                note=note, query=current_query)).strip()
        events.append(TraceEvent("stop", {"reason": stop_reason,
                                          "iterations": iterations}))
        template_id = cfg.template_id("deepnote_answer")
        answer = self._generate(cfg, render(template_id, note=note, query=query))
        events.append(TraceEvent("generation", {
            "prompt_template_id": template_id, "text": answer}))
        return events, answer
