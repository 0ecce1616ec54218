"""Exception hierarchy shared by all ragforge modules.

Every error carries a machine-readable ``code`` and the HTTP status the
service layer maps it to, so the API error envelope is uniform.
"""

from __future__ import annotations

from dataclasses import dataclass


class RagforgeError(Exception):
    """Base class for all toolkit errors."""

    code = "internal_error"
    http_status = 500

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details


# --- dataset model ---------------------------------------------------------

@dataclass(frozen=True)
class DatasetIssue:
    """One problem found while reading a dataset file.

    kind is one of ``malformed_line``, ``missing_field``,
    ``invariant_violation``; ``line_no`` is 1-based.
    """

    kind: str
    line_no: int
    detail: str
    field: str | None = None


class DatasetValidationError(RagforgeError):
    code = "dataset_invalid"
    http_status = 422

    def __init__(self, path: str, issues: list[DatasetIssue]):
        lines = "; ".join(
            f"line {i.line_no}: {i.kind}" + (f" ({i.field})" if i.field else "")
            for i in issues[:5]
        )
        more = "" if len(issues) <= 5 else f" (+{len(issues) - 5} more)"
        super().__init__(f"{path}: {len(issues)} invalid line(s): {lines}{more}")
        self.path = path
        self.issues = issues

    def kinds(self) -> set[str]:
        return {i.kind for i in self.issues}


class IoFailure(RagforgeError):
    code = "io_failure"
    http_status = 500


class MixedRecordKinds(RagforgeError):
    code = "mixed_record_kinds"
    http_status = 422


# --- knowledge manager -----------------------------------------------------

class UnsupportedFormat(RagforgeError):
    code = "unsupported_format"
    http_status = 400


class EmptyDocument(RagforgeError):
    code = "empty_document"
    http_status = 422


class ParseFailure(RagforgeError):
    code = "parse_failure"
    http_status = 422


class DuplicateDocId(RagforgeError):
    code = "duplicate_doc_id"
    http_status = 409


class KnowledgeBaseImmutable(RagforgeError):
    code = "kb_immutable"
    http_status = 409


class EmbedderUnavailable(RagforgeError):
    code = "embedder_unavailable"
    http_status = 503


class DimensionMismatch(RagforgeError):
    code = "dimension_mismatch"
    http_status = 422

    def __init__(self, expected: int, got: int, **details):
        super().__init__(f"expected embedding dim {expected}, got {got}", **details)
        self.expected = expected
        self.got = got


class PartialBuildAborted(RagforgeError):
    code = "partial_build_aborted"
    http_status = 500

    def __init__(self, message: str, completed_chunks: int, **details):
        super().__init__(message, completed_chunks=completed_chunks, **details)
        self.completed_chunks = completed_chunks


# --- model gateway ---------------------------------------------------------

class ModelNotFound(RagforgeError):
    code = "model_not_found"
    http_status = 404


class DuplicateModel(RagforgeError):
    code = "duplicate_model"
    http_status = 409


class EndpointError(RagforgeError):
    code = "endpoint_error"
    http_status = 503

    def __init__(self, message: str, status: int | None = None, **details):
        super().__init__(message, status=status, **details)
        self.status = status


class ContextOverflow(RagforgeError):
    code = "context_overflow"
    http_status = 422

    def __init__(self, prompt_tokens: int, max_context_tokens: int):
        super().__init__(
            f"prompt has {prompt_tokens} tokens, model context is {max_context_tokens}",
            prompt_tokens=prompt_tokens,
            max_context_tokens=max_context_tokens,
        )
        self.prompt_tokens = prompt_tokens
        self.max_context_tokens = max_context_tokens


class InvalidEmbedding(RagforgeError):
    code = "invalid_embedding"
    http_status = 422


# --- retrieval -------------------------------------------------------------

class IndexNotReady(RagforgeError):
    code = "index_not_ready"
    http_status = 409


# --- data construction -----------------------------------------------------

class GeneratorUnavailable(RagforgeError):
    code = "generator_unavailable"
    http_status = 503


class EmptyGeneration(RagforgeError):
    code = "empty_generation"
    http_status = 500

    def __init__(self, chunk_id: str, attempt: int):
        super().__init__(
            f"generator returned empty output for chunk {chunk_id} (attempt {attempt})",
            chunk_id=chunk_id,
            attempt=attempt,
        )
        self.chunk_id = chunk_id
        self.attempt = attempt


class MalformedGeneration(RagforgeError):
    code = "malformed_generation"
    http_status = 500


class NoGoldAnswer(RagforgeError):
    code = "no_gold_answer"
    http_status = 422

    def __init__(self, example_id: str):
        super().__init__(f"example {example_id} has no gold answers", example_id=example_id)
        self.example_id = example_id


class InsufficientCorpus(RagforgeError):
    code = "insufficient_corpus"
    http_status = 422


class UnresolvableChunkId(RagforgeError):
    code = "unresolvable_chunk_id"
    http_status = 422

    def __init__(self, chunk_ids: list[str]):
        super().__init__(f"chunk ids not present in knowledge base: {', '.join(chunk_ids)}")
        self.chunk_ids = chunk_ids


# --- workflow engine -------------------------------------------------------

class MalformedVerdict(RagforgeError):
    code = "malformed_verdict"
    http_status = 500

    def __init__(self, iteration: int, output: str):
        super().__init__(
            f"reviewer output at iteration {iteration} lacks a KEEP/UPDATE verdict line",
            iteration=iteration,
        )
        self.iteration = iteration
        self.output = output


# --- service ---------------------------------------------------------------

class KnowledgeBaseNotFound(RagforgeError):
    code = "kb_not_found"
    http_status = 404


class DuplicateKnowledgeBase(RagforgeError):
    code = "kb_exists"
    http_status = 409


class BuildInProgress(RagforgeError):
    code = "build_in_progress"
    http_status = 409


class NotFound(RagforgeError):
    code = "not_found"
    http_status = 404


class ConfigError(RagforgeError):
    code = "config_error"
    http_status = 400
