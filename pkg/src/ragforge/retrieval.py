"""Top-k vector search over a ready knowledge base.

The exact backend scores every chunk by cosine similarity (a dot product,
since stored vectors are unit-norm) and is the oracle the approximate
backend is measured against.  The approximate backend is an inverted-list
index: k-means centroids over the chunk vectors, search scans only the
n_probes nearest lists.

Ordering is fully deterministic: score descending, ties by ascending
chunk_id, ranks dense from 1.  Scores are computed in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    EmbedderUnavailable,
    EndpointError,
    IndexNotReady,
)
from .gateway import ModelGateway
from .knowledge import KnowledgeBase

KMEANS_ITERATIONS = 20


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float
    rank: int


def _require_ready(kb: KnowledgeBase) -> None:
    if kb.index_state != "ready":
        raise IndexNotReady(
            f"knowledge base {kb.kb_id!r} is {kb.index_state}; build it first")


def embed_query(kb: KnowledgeBase, gateway: ModelGateway, query_text: str,
                query_embedder_id: str | None = None) -> np.ndarray:
    """Unit-norm float64 query vector; embedder defaults to the KB's own."""
    embedder_id = query_embedder_id or kb.embedder_id
    try:
        raw = gateway.embed(embedder_id, [query_text])[0]
    except EndpointError as exc:
        raise EmbedderUnavailable(str(exc)) from exc
    v = raw.astype(np.float64)
    return v / np.linalg.norm(v)


def rank_hits(chunk_ids: list[str], scores: np.ndarray, k: int) -> list[SearchHit]:
    """Applies the ordering contract to (id, score) pairs; scores clamped to
    the cosine domain."""
    scores = np.clip(scores, -1.0, 1.0)
    ids_arr = np.asarray(chunk_ids)
    # lexsort uses the last key as primary
    order = np.lexsort((ids_arr, -scores))[:k]
    return [SearchHit(chunk_id=str(ids_arr[i]), score=float(scores[i]), rank=r + 1)
            for r, i in enumerate(order)]


def search(kb: KnowledgeBase, gateway: ModelGateway, query_text: str, k: int,
           backend: str = "exact", approx_index: "ApproxIndex | None" = None,
           n_probes: int | None = None,
           query_embedder_id: str | None = None) -> list[SearchHit]:
    _require_ready(kb)
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    qv = embed_query(kb, gateway, query_text, query_embedder_id)
    if backend == "exact":
        scores = kb.vectors.astype(np.float64) @ qv
        return rank_hits([c.chunk_id for c in kb.chunks], scores, k)
    if backend == "approx":
        index = approx_index or build_approx_index(kb)
        return index.search(kb, qv, k, n_probes)
    raise ConfigError(f"unknown search backend {backend!r}")


def search_then_rerank(kb: KnowledgeBase, gateway: ModelGateway, query_text: str,
                       k_retrieve: int, k_final: int,
                       reranker_id: str) -> list[SearchHit]:
    """Exact top-k_retrieve, then reorder by reranker score and keep k_final."""
    if k_final > k_retrieve:
        raise ConfigError(f"k_final {k_final} exceeds k_retrieve {k_retrieve}")
    hits = search(kb, gateway, query_text, k_retrieve)
    texts = [kb.chunk(h.chunk_id).text for h in hits]
    reranked = gateway.rerank(reranker_id, query_text, texts)
    return [SearchHit(chunk_id=hits[idx].chunk_id, score=score, rank=pos + 1)
            for pos, (idx, score) in enumerate(reranked[:k_final])]


@dataclass
class ApproxIndex:
    """Inverted lists over k-means centroids; member arrays index kb.vectors."""

    centroids: np.ndarray          # (n_lists, dim) float64
    lists: list[np.ndarray]        # row indices per centroid
    nlist_requested: int
    seed: int

    @property
    def n_lists(self) -> int:
        return len(self.lists)

    def search(self, kb: KnowledgeBase, query_vector: np.ndarray, k: int,
               n_probes: int | None = None) -> list[SearchHit]:
        _require_ready(kb)
        if n_probes is None:
            n_probes = max(1, math.ceil(self.n_lists / 4))
        n_probes = min(max(1, n_probes), self.n_lists)
        # nearest centroids by L2, the metric k-means optimized
        c2 = np.sum(self.centroids**2, axis=1)
        probe_order = np.argsort(c2 - 2.0 * (self.centroids @ query_vector),
                                 kind="stable")[:n_probes]
        rows = np.concatenate([self.lists[j] for j in probe_order])
        scores = kb.vectors[rows].astype(np.float64) @ query_vector
        return rank_hits([kb.chunks[i].chunk_id for i in rows], scores, k)


def build_approx_index(kb: KnowledgeBase, seed: int = 0) -> ApproxIndex:
    """k-means with nlist = ceil(sqrt(n)) centroids, fixed iteration count,
    seeded initialization; empty clusters are dropped at the end."""
    _require_ready(kb)
    X = kb.vectors.astype(np.float64)
    n = X.shape[0]
    nlist = math.ceil(math.sqrt(n))
    rng = np.random.default_rng(seed)
    centroids = X[rng.choice(n, size=nlist, replace=False)].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_ITERATIONS):
        # argmin over ||x - c||^2; the x^2 term is constant per row
        c2 = np.sum(centroids**2, axis=1)
        assign = np.argmin(c2[None, :] - 2.0 * (X @ centroids.T), axis=1)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, X)
        counts = np.bincount(assign, minlength=nlist)
        occupied = counts > 0
        centroids[occupied] = sums[occupied] / counts[occupied, None]
    lists = []
    kept_centroids = []
    for j in range(nlist):
        members = np.nonzero(assign == j)[0]
        if members.size:
            lists.append(members)
            kept_centroids.append(centroids[j])
    return ApproxIndex(centroids=np.asarray(kept_centroids), lists=lists,
                       nlist_requested=nlist, seed=seed)


def measure_recall(kb: KnowledgeBase, index: ApproxIndex,
                   query_vectors: np.ndarray, k: int,
                   n_probes: int) -> float:
    """Mean fraction of exact top-k ids the approximate search also returns."""
    total = 0.0
    ids = [c.chunk_id for c in kb.chunks]
    for qv in query_vectors:
        qv = qv.astype(np.float64)
        qv = qv / np.linalg.norm(qv)
        exact = {h.chunk_id for h in rank_hits(ids, kb.vectors.astype(np.float64) @ qv, k)}
        approx = {h.chunk_id for h in index.search(kb, qv, k, n_probes)}
        total += len(exact & approx) / len(exact)
    return total / len(query_vectors)
