"""Document ingestion, knowledge bases, and index snapshots.

A KnowledgeBase goes through three index states: empty (documents may still
be added), building, and ready.  Ready means every chunk has exactly one
unit-norm embedding; from then on the KB is immutable and safe to share
across threads.

Snapshot layout, all little-endian, no timestamps so identical corpora
produce byte-identical files:

    bytes 0..19   header: magic "RAGKBSNP", version u32, dim u32, count u32
    then          count rows of dim float32 vectors
    then          UTF-8 JSONL: one meta line, then one line per chunk
"""

from __future__ import annotations

import csv
import io
import json
import struct
import time
import unicodedata
from pathlib import Path

import numpy as np

from .chunking import ChunkingConfig, chunk_document
from .errors import (
    ConfigError,
    DuplicateDocId,
    EmbedderUnavailable,
    EmptyDocument,
    EndpointError,
    IoFailure,
    KnowledgeBaseImmutable,
    ParseFailure,
    PartialBuildAborted,
    UnresolvableChunkId,
    UnsupportedFormat,
)
from .gateway import ModelGateway
from .records import Chunk, Document
from .tokenizer import DEFAULT_TOKENIZER_ID, default_tokenizer

SNAPSHOT_MAGIC = b"RAGKBSNP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sIII")

FORMATS = ("txt", "markdown", "jsonl", "csv")


def _normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def parse_documents(name: str, format: str, raw: str,
                    text_column: str | None = None,
                    source_path: str = "") -> list[Document]:
    """Parse raw file content into documents.

    txt/markdown yield a single document; jsonl and csv yield one document
    per line/row named "{name}-{n}" with the source position recorded in
    metadata.
    """
    if format not in FORMATS:
        raise UnsupportedFormat(f"unsupported format {format!r}; expected one of {FORMATS}")
    where = source_path or name

    if format in ("txt", "markdown"):
        text = _normalize(raw)
        if not default_tokenizer(text):
            raise EmptyDocument(f"{where} has no tokens")
        return [Document(doc_id=name, source_path=source_path, format=format, text=text)]

    if text_column is None:
        raise ConfigError(f"format {format!r} needs a text column name")

    docs = []
    if format == "jsonl":
        for line_no, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseFailure(f"{where}:{line_no}: invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict) or text_column not in obj:
                raise ParseFailure(f"{where}:{line_no}: missing column {text_column!r}")
            text = _normalize(str(obj[text_column]))
            if not default_tokenizer(text):
                raise EmptyDocument(f"{where}:{line_no} has no tokens")
            docs.append(Document(
                doc_id=f"{name}-{line_no}", source_path=source_path, format=format,
                text=text, metadata={"source_line": str(line_no)}))
        return docs

    reader = csv.DictReader(io.StringIO(raw))
    if reader.fieldnames is None or text_column not in reader.fieldnames:
        raise ParseFailure(f"{where}: missing column {text_column!r} in CSV header")
    for row_no, row in enumerate(reader, start=1):
        text = _normalize(row[text_column] or "")
        if not default_tokenizer(text):
            raise EmptyDocument(f"{where} row {row_no} has no tokens")
        docs.append(Document(
            doc_id=f"{name}-{row_no}", source_path=source_path, format=format,
            text=text, metadata={"source_row": str(row_no)}))
    return docs


def read_documents(path: str | Path, format: str,
                   text_column: str | None = None) -> list[Document]:
    """parse_documents over a file; documents are named after the file stem."""
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such file: {path}")
    return parse_documents(path.stem, format, path.read_text(encoding="utf-8"),
                           text_column, source_path=str(path))


class KnowledgeBase:
    """A named corpus with chunking config, embeddings, and a search index."""

    def __init__(self, kb_id: str, chunking: ChunkingConfig | None = None,
                 embedder_id: str = ""):
        if not kb_id:
            raise ConfigError("kb_id must be non-empty")
        self.kb_id = kb_id
        self.chunking = chunking or ChunkingConfig()
        self.embedder_id = embedder_id
        self.documents: dict[str, Document] = {}
        self.chunks: list[Chunk] = []
        self._by_chunk_id: dict[str, int] = {}
        self.index_state = "empty"
        self.embedding_dim: int | None = None
        self.vectors: np.ndarray | None = None
        self._built_prefix = 0  # chunks already embedded by an aborted build

    # -- corpus assembly ---------------------------------------------------

    def add_documents(self, docs: list[Document]) -> list[str]:
        if self.index_state == "ready":
            raise KnowledgeBaseImmutable(
                f"knowledge base {self.kb_id!r} is built; create a new KB to change it")
        for doc in docs:
            if doc.doc_id in self.documents:
                raise DuplicateDocId(f"doc_id {doc.doc_id!r} already ingested")
        added = []
        for doc in docs:
            new_chunks = chunk_document(doc, self.chunking)
            self.documents[doc.doc_id] = doc
            for chunk in new_chunks:
                self._by_chunk_id[chunk.chunk_id] = len(self.chunks)
                self.chunks.append(chunk)
            added.append(doc.doc_id)
        return added

    def ingest(self, path: str | Path, format: str,
               text_column: str | None = None) -> list[str]:
        return self.add_documents(read_documents(path, format, text_column))

    # -- index build -------------------------------------------------------

    def build_index(self, gateway: ModelGateway, batch_size: int = 32) -> dict:
        """Embeds every chunk and flips the KB to ready.

        A failure partway keeps the completed prefix so a retry resumes
        instead of re-embedding from scratch.
        """
        if not self.chunks:
            raise ConfigError(f"knowledge base {self.kb_id!r} has no chunks to index")
        if not self.embedder_id:
            raise ConfigError(f"knowledge base {self.kb_id!r} has no embedder configured")
        started = time.monotonic()
        dim = gateway.registry.get(self.embedder_id).dim
        if self.vectors is None or self.vectors.shape != (len(self.chunks), dim):
            self.vectors = np.zeros((len(self.chunks), dim), dtype=np.float32)
            self._built_prefix = 0
        self.index_state = "building"
        i = self._built_prefix
        try:
            while i < len(self.chunks):
                batch = self.chunks[i:i + batch_size]
                embedded = gateway.embed(self.embedder_id, [c.text for c in batch])
                norms = np.linalg.norm(embedded, axis=1, keepdims=True)
                self.vectors[i:i + len(batch)] = (embedded / norms).astype(np.float32)
                i += len(batch)
                self._built_prefix = i
        except EndpointError as exc:
            self.index_state = "empty"
            if self._built_prefix > 0:
                raise PartialBuildAborted(
                    f"index build stopped after {self._built_prefix} of "
                    f"{len(self.chunks)} chunks: {exc}",
                    completed_chunks=self._built_prefix) from exc
            raise EmbedderUnavailable(str(exc)) from exc
        except Exception:
            self.index_state = "empty"
            raise
        self.embedding_dim = dim
        self.index_state = "ready"
        return {
            "n_chunks": len(self.chunks),
            "dim": dim,
            "build_seconds": time.monotonic() - started,
        }

    # -- lookups -----------------------------------------------------------

    def chunk(self, chunk_id: str) -> Chunk:
        try:
            return self.chunks[self._by_chunk_id[chunk_id]]
        except KeyError:
            raise UnresolvableChunkId([chunk_id]) from None

    def resolve_chunks(self, chunk_ids: list[str]) -> list[Chunk]:
        missing = [cid for cid in chunk_ids if cid not in self._by_chunk_id]
        if missing:
            raise UnresolvableChunkId(missing)
        return [self.chunks[self._by_chunk_id[cid]] for cid in chunk_ids]

    def stat(self) -> dict:
        return {
            "kb_id": self.kb_id,
            "n_documents": len(self.documents) or len({c.doc_id for c in self.chunks}),
            "n_chunks": len(self.chunks),
            "index_state": self.index_state,
            "embedding_dim": self.embedding_dim,
            "embedder_id": self.embedder_id,
            "chunk_size": self.chunking.chunk_size,
            "overlap_fraction": self.chunking.overlap_fraction,
        }

    # -- snapshots ---------------------------------------------------------

    def save_snapshot(self, path: str | Path) -> None:
        if self.index_state != "ready":
            raise ConfigError("only a ready knowledge base can be snapshotted")
        meta = {
            "kb_id": self.kb_id,
            "embedder_id": self.embedder_id,
            "chunk_size": self.chunking.chunk_size,
            "overlap_fraction": self.chunking.overlap_fraction,
            "tokenizer_id": DEFAULT_TOKENIZER_ID,
        }
        lines = [json.dumps(meta, ensure_ascii=False)]
        for c in self.chunks:
            lines.append(json.dumps({
                "chunk_id": c.chunk_id,
                "doc_id": c.doc_id,
                "ordinal": c.ordinal,
                "token_span": list(c.token_span),
                "text": c.text,
                "token_count": c.token_count,
            }, ensure_ascii=False))
        header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
                              self.embedding_dim, len(self.chunks))
        body = np.ascontiguousarray(self.vectors, dtype="<f4").tobytes()
        try:
            with Path(path).open("wb") as f:
                f.write(header)
                f.write(body)
                f.write(("\n".join(lines) + "\n").encode("utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot write snapshot {path}: {exc}") from exc

    @classmethod
    def load_snapshot(cls, path: str | Path) -> "KnowledgeBase":
        """Restores a ready KB.  Source document bodies are not retained in
        snapshots; only chunks (the retrieval unit) come back."""
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ParseFailure(f"snapshot {path} is truncated")
        magic, version, dim, count = _HEADER.unpack_from(raw)
        if magic != SNAPSHOT_MAGIC:
            raise UnsupportedFormat(f"{path} is not a knowledge base snapshot")
        if version != SNAPSHOT_VERSION:
            raise UnsupportedFormat(f"snapshot version {version} not supported")
        vec_end = _HEADER.size + 4 * dim * count
        if len(raw) < vec_end:
            raise ParseFailure(f"snapshot {path} is truncated")
        vectors = np.frombuffer(raw[_HEADER.size:vec_end], dtype="<f4")
        vectors = vectors.reshape(count, dim).copy()
        lines = raw[vec_end:].decode("utf-8").splitlines()
        if len(lines) != count + 1:
            raise ParseFailure(
                f"snapshot {path} chunk table has {len(lines) - 1} rows, expected {count}")
        try:
            meta = json.loads(lines[0])
            kb = cls(meta["kb_id"],
                     ChunkingConfig(meta["chunk_size"], meta["overlap_fraction"]),
                     meta["embedder_id"])
            for line in lines[1:]:
                obj = json.loads(line)
                chunk = Chunk(
                    chunk_id=obj["chunk_id"], doc_id=obj["doc_id"], ordinal=obj["ordinal"],
                    token_span=tuple(obj["token_span"]), text=obj["text"],
                    token_count=obj["token_count"])
                kb._by_chunk_id[chunk.chunk_id] = len(kb.chunks)
                kb.chunks.append(chunk)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseFailure(f"snapshot {path} chunk table is corrupt: {exc}") from exc
        kb.vectors = vectors
        kb.embedding_dim = dim
        kb.index_state = "ready"
        return kb
