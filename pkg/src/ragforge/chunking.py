"""Token-window chunking with fractional overlap.

A document of T tokens is cut into windows of chunk_size tokens whose starts
advance by stride = chunk_size - floor(chunk_size * overlap_fraction).  The
final window is emitted only if it contributes at least one token that no
earlier window covers, so short tails fold into the previous chunk's overlap
rather than producing a duplicate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, EmptyDocument
from .records import Chunk, Document
from .tokenizer import default_tokenizer, detokenize


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = 512
    overlap_fraction: float = 0.15

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ConfigError(
                f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")

    @property
    def overlap_tokens(self) -> int:
        return math.floor(self.chunk_size * self.overlap_fraction)

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap_tokens


def chunk_spans(total_tokens: int, config: ChunkingConfig) -> list[tuple[int, int]]:
    """Token spans [start, end) covering a document of total_tokens tokens."""
    if total_tokens <= 0:
        return []
    if total_tokens <= config.chunk_size:
        return [(0, total_tokens)]
    spans = [(0, config.chunk_size)]
    start = config.stride
    while start < total_tokens:
        end = min(start + config.chunk_size, total_tokens)
        # Emit only windows that extend past everything covered so far.
        if end > spans[-1][1]:
            spans.append((start, end))
        start += config.stride
    return spans


def chunk_document(doc: Document, config: ChunkingConfig | None = None) -> list[Chunk]:
    """Split one document into chunks; raises EmptyDocument if it has no tokens.

    Chunk text is the detokenized token span, so whitespace runs in the source
    collapse to single spaces.  chunk_id is "{doc_id}#{ordinal}" with ordinals
    counting from 0 in document order.
    """
    config = config or ChunkingConfig()
    tokens = default_tokenizer(doc.text)
    if not tokens:
        raise EmptyDocument(f"document {doc.doc_id!r} has no tokens")
    chunks = []
    for ordinal, (start, end) in enumerate(chunk_spans(len(tokens), config)):
        chunks.append(Chunk(
            chunk_id=f"{doc.doc_id}#{ordinal}",
            doc_id=doc.doc_id,
            ordinal=ordinal,
            token_span=(start, end),
            text=detokenize(tokens[start:end]),
            token_count=end - start,
        ))
    return chunks
