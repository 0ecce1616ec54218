"""Batch evaluation of retrieval and generation over unified datasets.

Reports are deterministic for deterministic backends: rows are assembled in
example_id order and every aggregate is the arithmetic mean of its column
over the scored rows.  A failing example becomes an error row and a failure
count; the run continues.
"""

from __future__ import annotations

import dataclasses
import time
import uuid
from dataclasses import dataclass
from typing import Sequence

from .errors import RagforgeError
from .gateway import ModelGateway
from .knowledge import KnowledgeBase
from .metrics import (
    best_rouge_l_f,
    best_token_f1,
    exact_match,
    mrr_at_k,
    ndcg_at_k,
    recall_at_k,
)
from .records import QAExample
from .retrieval import search
from .workflows import WorkflowConfig, WorkflowEngine


@dataclass(frozen=True)
class RetrievalRunRecord:
    example_id: str
    ranked_chunk_ids: tuple[str, ...]
    gold_chunk_ids: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.ranked_chunk_ids)) != len(self.ranked_chunk_ids):
            raise ValueError(f"{self.example_id}: ranked list has duplicates")
        if not self.gold_chunk_ids:
            raise ValueError(f"{self.example_id}: gold set is empty")


@dataclass
class EvalReport:
    eval_id: str
    dataset_id: str
    kind: str  # retrieval | generation
    config: dict
    metrics: dict[str, float]
    rows: list[dict]
    n_examples: int
    n_scored: int
    failures: int
    wall_seconds: float

    def to_dict(self) -> dict:
        return {
            "eval_id": self.eval_id,
            "dataset_id": self.dataset_id,
            "kind": self.kind,
            "config": self.config,
            "metrics": self.metrics,
            "n_examples": self.n_examples,
            "n_scored": self.n_scored,
            "failures": self.failures,
            "wall_seconds": self.wall_seconds,
            "rows": self.rows,
        }


def score_retrieval_record(record: RetrievalRunRecord, k: int) -> dict[str, float]:
    return {
        f"mrr@{k}": mrr_at_k(record.ranked_chunk_ids, record.gold_chunk_ids, k),
        f"ndcg@{k}": ndcg_at_k(record.ranked_chunk_ids, record.gold_chunk_ids, k),
        f"recall@{k}": recall_at_k(record.ranked_chunk_ids, record.gold_chunk_ids, k),
    }


def _finish(eval_id: str | None, dataset_id: str, kind: str, config: dict,
            metric_keys: list[str], rows: list[dict], n_examples: int,
            started: float) -> EvalReport:
    scored = [r for r in rows if "error" not in r]
    metrics = {}
    for key in metric_keys:
        metrics[key] = (sum(r[key] for r in scored) / len(scored)) if scored else 0.0
    return EvalReport(
        eval_id=eval_id or f"eval-{uuid.uuid4().hex[:8]}",
        dataset_id=dataset_id, kind=kind, config=config, metrics=metrics,
        rows=rows, n_examples=n_examples, n_scored=len(scored),
        failures=n_examples - len(scored),
        wall_seconds=time.monotonic() - started)


def evaluate_retrieval(kb: KnowledgeBase, gateway: ModelGateway,
                       dataset: Sequence[QAExample], k: int = 10,
                       dataset_id: str = "", eval_id: str | None = None,
                       query_embedder_id: str | None = None) -> EvalReport:
    started = time.monotonic()
    metric_keys = [f"mrr@{k}", f"ndcg@{k}", f"recall@{k}"]
    rows = []
    for example in sorted(dataset, key=lambda e: e.example_id):
        if not example.gold_chunk_ids:
            rows.append({"example_id": example.example_id,
                         "error": "no_gold_chunk_ids"})
            continue
        try:
            hits = search(kb, gateway, example.query, k,
                          query_embedder_id=query_embedder_id)
            record = RetrievalRunRecord(
                example_id=example.example_id,
                ranked_chunk_ids=tuple(h.chunk_id for h in hits),
                gold_chunk_ids=example.gold_chunk_ids)
        except RagforgeError as exc:
            rows.append({"example_id": example.example_id, "error": exc.code})
            continue
        rows.append({"example_id": example.example_id,
                     **score_retrieval_record(record, k)})
    config = {"kb_id": kb.kb_id, "k": k,
              "embedder_id": query_embedder_id or kb.embedder_id}
    return _finish(eval_id, dataset_id, "retrieval", config, metric_keys,
                   rows, len(dataset), started)


def evaluate_generation(engine: WorkflowEngine, cfg: WorkflowConfig,
                        dataset: Sequence[QAExample], dataset_id: str = "",
                        eval_id: str | None = None) -> EvalReport:
    """Runs the workflow per example; each answer is scored against the gold
    answers (best match when there are several)."""
    started = time.monotonic()
    metric_keys = ["rouge_l", "exact_match", "token_f1"]
    rows = []
    for example in sorted(dataset, key=lambda e: e.example_id):
        if not example.answers:
            rows.append({"example_id": example.example_id, "error": "no_gold_answer"})
            continue
        try:
            answer, _ = engine.run(cfg, example.query,
                                   run_id=f"eval-{example.example_id}")
        except RagforgeError as exc:
            rows.append({"example_id": example.example_id, "error": exc.code})
            continue
        rows.append({
            "example_id": example.example_id,
            "rouge_l": best_rouge_l_f(answer, example.answers),
            "exact_match": exact_match(answer, example.answers),
            "token_f1": best_token_f1(answer, example.answers),
        })
    config = dataclasses.asdict(cfg)
    return _finish(eval_id, dataset_id, "generation", config, metric_keys,
                   rows, len(dataset), started)
