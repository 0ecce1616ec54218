"""Shared builders for test fixtures: in-memory knowledge bases, mock model
registries, and a deterministic synthetic corpus."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ragforge.chunking import ChunkingConfig
from ragforge.gateway import ModelGateway, ModelRegistry, ModelSpec
from ragforge.knowledge import KnowledgeBase
from ragforge.records import Chunk, Document

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "src" / "ragforge" / "fixtures" / "toy"

WORDS = (
    "amber basalt cedar dune ember fjord grove harbor inlet juniper "
    "kestrel lagoon marsh nettle orchid pumice quartz reef sleet tundra"
).split()


def mock_gateway(dim: int = 16, seed: int = 7) -> ModelGateway:
    """Registry with one mock model per role, ids m-embed / m-gen / m-rank."""
    registry = ModelRegistry()
    registry.register(ModelSpec("m-embed", "embedder", "mock", dim=dim, seed=seed))
    registry.register(ModelSpec("m-gen", "generator", "mock"))
    registry.register(ModelSpec("m-rank", "reranker", "mock"))
    return ModelGateway(registry)


def synthetic_text(i: int, length: int = 24) -> str:
    """Deterministic filler prose, distinct per index."""
    picks = [WORDS[(i * 7 + j * 3) % len(WORDS)] for j in range(length - 2)]
    return f"passage {i:02d} " + " ".join(picks)


def synthetic_docs(n: int) -> list[Document]:
    return [Document(doc_id=f"doc{i:02d}", source_path="", format="txt",
                     text=synthetic_text(i), metadata={})
            for i in range(n)]


def build_synthetic_kb(n_chunks: int = 50, gateway: ModelGateway | None = None,
                       kb_id: str = "synth") -> tuple[KnowledgeBase, ModelGateway]:
    """One single-chunk document per index, embedded with the hash mock."""
    gateway = gateway or mock_gateway()
    kb = KnowledgeBase(kb_id, ChunkingConfig(), "m-embed")
    kb.add_documents(synthetic_docs(n_chunks))
    kb.build_index(gateway)
    return kb, gateway


def vector_kb(vectors: np.ndarray, kb_id: str = "vec",
              embedder_id: str = "m-embed") -> KnowledgeBase:
    """KB whose index is installed directly from an (n, d) float array,
    bypassing embedding; chunk ids are c0000, c0001, ..."""
    n, d = vectors.shape
    kb = KnowledgeBase(kb_id, ChunkingConfig(), embedder_id)
    kb.chunks = [Chunk(chunk_id=f"c{i:04d}", doc_id="vec", ordinal=i,
                       text=f"vector row {i}", token_span=(0, 0), token_count=3)
                 for i in range(n)]
    kb._by_chunk_id = {c.chunk_id: i for i, c in enumerate(kb.chunks)}
    kb.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    kb.embedding_dim = d
    kb.index_state = "ready"
    return kb


class TableEmbedder:
    """Mock embedder answering from a text -> vector table."""

    def __init__(self, table: dict[str, np.ndarray], dim: int):
        self.table = table
        self.dim = dim

    def embed(self, texts: list[str]) -> np.ndarray:
        rows = [self.table[t] for t in texts]
        return np.asarray(rows, dtype=np.float32).reshape(len(texts), self.dim)


def load_toy_kb(gateway: ModelGateway | None = None) -> tuple[KnowledgeBase, ModelGateway]:
    from ragforge.knowledge import read_documents

    if gateway is None:
        gateway = ModelGateway(ModelRegistry.from_toml(FIXTURE_DIR / "models.toml"))
    kb = KnowledgeBase("toy", ChunkingConfig(), "toy-embedder")
    for doc_path in sorted((FIXTURE_DIR / "docs").glob("*.txt")):
        kb.add_documents(read_documents(doc_path, "txt"))
    kb.build_index(gateway)
    return kb, gateway
