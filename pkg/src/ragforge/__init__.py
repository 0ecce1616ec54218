"""Modular toolkit for retrieval-augmented generation pipelines.

Knowledge bases with deterministic chunking and snapshots, exact and
approximate dense search, workflow execution with replayable traces,
training-data synthesis, and batch evaluation with rendered reports.
"""

from .chunking import ChunkingConfig, chunk_document, chunk_spans
from .errors import DatasetIssue, DatasetValidationError, RagforgeError
from .evaluate import EvalReport, evaluate_generation, evaluate_retrieval
from .gateway import GenerationRequest, ModelGateway, ModelRegistry, ModelSpec
from .knowledge import KnowledgeBase, parse_documents, read_documents
from .metrics import (
    best_rouge_l_f,
    best_token_f1,
    exact_match,
    mrr_at_k,
    ndcg_at_k,
    recall_at_k,
    rouge_l,
)
from .records import (
    Chunk,
    Document,
    PreferencePair,
    QAExample,
    RetrievalPairExample,
    SFTExample,
    read_dataset,
    write_dataset,
)
from .retrieval import (
    ApproxIndex,
    SearchHit,
    build_approx_index,
    measure_recall,
    search,
    search_then_rerank,
)
from .synth import (
    SynthesisConfig,
    build_ddr_preferences,
    build_kbalign_sft,
    export_training_files,
    mine_hard_negatives,
    mix,
    synthesize_queries,
)
from .workflows import WorkflowConfig, WorkflowEngine, WorkflowTrace

__version__ = "0.1.0"

__all__ = [
    "ApproxIndex",
    "Chunk",
    "ChunkingConfig",
    "DatasetIssue",
    "DatasetValidationError",
    "Document",
    "EvalReport",
    "GenerationRequest",
    "KnowledgeBase",
    "ModelGateway",
    "ModelRegistry",
    "ModelSpec",
    "PreferencePair",
    "QAExample",
    "RagforgeError",
    "RetrievalPairExample",
    "SFTExample",
    "SearchHit",
    "SynthesisConfig",
    "WorkflowConfig",
    "WorkflowEngine",
    "WorkflowTrace",
    "best_rouge_l_f",
    "best_token_f1",
    "build_approx_index",
    "build_ddr_preferences",
    "build_kbalign_sft",
    "chunk_document",
    "chunk_spans",
    "evaluate_generation",
    "evaluate_retrieval",
    "exact_match",
    "export_training_files",
    "measure_recall",
    "mine_hard_negatives",
    "mix",
    "mrr_at_k",
    "ndcg_at_k",
    "parse_documents",
    "read_dataset",
    "read_documents",
    "recall_at_k",
    "rouge_l",
    "search",
    "search_then_rerank",
    "synthesize_queries",
    "write_dataset",
]
