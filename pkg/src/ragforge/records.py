"""Domain record types and the unified JSON Lines dataset format.

One JSON object per line, UTF-8, with a fixed key order per record kind so
that writes are byte-stable:

    qa             example_id, query, answers, gold_chunk_ids, metadata
    retrieval_pair query, positive_chunk_ids, negative_chunk_ids
    preference     prompt, chosen, rejected, chosen_reward, rejected_reward
    sft            prompt, response, annotation_range, metadata

Records are immutable values and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DatasetIssue, DatasetValidationError, IoFailure, MixedRecordKinds


@dataclass(frozen=True)
class Document:
    doc_id: str
    source_path: str
    format: str  # txt | markdown | jsonl | csv
    text: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Chunk:
    chunk_id: str  # "{doc_id}#{ordinal}"
    doc_id: str
    ordinal: int
    token_span: tuple[int, int]  # [start, end) token indices into the document
    text: str
    token_count: int


@dataclass(frozen=True)
class QAExample:
    example_id: str
    query: str
    answers: tuple[str, ...] = ()
    gold_chunk_ids: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def problems(self) -> list[str]:
        out = []
        if not self.query:
            out.append("query must be non-empty")
        if not self.answers and not self.gold_chunk_ids:
            out.append("answers may be empty only when gold_chunk_ids is non-empty")
        return out


@dataclass(frozen=True)
class RetrievalPairExample:
    query: str
    positive_chunk_ids: tuple[str, ...]
    negative_chunk_ids: tuple[str, ...] = ()

    def problems(self) -> list[str]:
        out = []
        if not self.query:
            out.append("query must be non-empty")
        if not self.positive_chunk_ids:
            out.append("positive_chunk_ids must be non-empty")
        overlap = set(self.positive_chunk_ids) & set(self.negative_chunk_ids)
        if overlap:
            out.append(f"positives and negatives overlap: {sorted(overlap)}")
        return out


@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    chosen: str
    rejected: str
    chosen_reward: float
    rejected_reward: float

    def problems(self) -> list[str]:
        out = []
        if not self.prompt:
            out.append("prompt must be non-empty")
        for name, value in (("chosen_reward", self.chosen_reward),
                            ("rejected_reward", self.rejected_reward)):
            if not 0.0 <= value <= 1.0:
                out.append(f"{name} must be in [0, 1], got {value}")
        # The configured reward gap is enforced at construction time; on disk
        # we only require a non-negative gap.
        if self.chosen_reward < self.rejected_reward:
            out.append("chosen_reward must be >= rejected_reward")
        return out


@dataclass(frozen=True)
class SFTExample:
    prompt: str
    response: str
    annotation_range: str  # short | long
    metadata: dict = field(default_factory=dict)

    def problems(self) -> list[str]:
        out = []
        if not self.prompt:
            out.append("prompt must be non-empty")
        if not self.response:
            out.append("response must be non-empty")
        if self.annotation_range not in ("short", "long"):
            out.append(f"annotation_range must be short or long, got {self.annotation_range!r}")
        return out


# (record class, required fields, optional fields with defaults)
_SCHEMAS = {
    "qa": (QAExample, ("example_id", "query"),
           {"answers": (), "gold_chunk_ids": (), "metadata": {}}),
    "retrieval_pair": (RetrievalPairExample, ("query", "positive_chunk_ids"),
                       {"negative_chunk_ids": ()}),
    "preference": (PreferencePair,
                   ("prompt", "chosen", "rejected", "chosen_reward", "rejected_reward"), {}),
    "sft": (SFTExample, ("prompt", "response", "annotation_range"), {"metadata": {}}),
}

# Fixed on-disk key order per kind (see module docstring).
_FIELD_ORDER = {
    "qa": ("example_id", "query", "answers", "gold_chunk_ids", "metadata"),
    "retrieval_pair": ("query", "positive_chunk_ids", "negative_chunk_ids"),
    "preference": ("prompt", "chosen", "rejected", "chosen_reward", "rejected_reward"),
    "sft": ("prompt", "response", "annotation_range", "metadata"),
}

_KIND_BY_CLASS = {cls: kind for kind, (cls, _, _) in _SCHEMAS.items()}


def kind_of(record) -> str:
    try:
        return _KIND_BY_CLASS[type(record)]
    except KeyError:
        raise TypeError(f"not a dataset record: {type(record).__name__}") from None


def _coerce(kind: str, name: str, value, issues: list[DatasetIssue], line_no: int):
    """Type-check one raw JSON field; returns the internal representation."""
    if name in ("answers", "gold_chunk_ids", "positive_chunk_ids", "negative_chunk_ids"):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            issues.append(DatasetIssue("invariant_violation", line_no,
                                       f"{name} must be a list of strings", field=name))
            return ()
        return tuple(value)
    if name == "metadata":
        if not isinstance(value, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in value.items()
        ):
            issues.append(DatasetIssue("invariant_violation", line_no,
                                       f"{name} must map strings to strings", field=name))
            return {}
        return dict(value)
    if name in ("chosen_reward", "rejected_reward"):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            issues.append(DatasetIssue("invariant_violation", line_no,
                                       f"{name} must be a number", field=name))
            return 0.0
        return float(value)
    if not isinstance(value, str):
        issues.append(DatasetIssue("invariant_violation", line_no,
                                   f"{name} must be a string", field=name))
        return ""
    return value


def record_from_obj(kind: str, obj: dict, line_no: int, issues: list[DatasetIssue]):
    """Build one record from a parsed JSON object, appending issues found."""
    cls, required, optional = _SCHEMAS[kind]
    kwargs = {}
    for name in required:
        if name not in obj:
            issues.append(DatasetIssue("missing_field", line_no,
                                       f"required field {name!r} is missing", field=name))
            kwargs[name] = _coerce(kind, name, "" if name not in
                                   ("chosen_reward", "rejected_reward") else 0.0, [], line_no)
        else:
            kwargs[name] = _coerce(kind, name, obj[name], issues, line_no)
    for name, default in optional.items():
        if name in obj:
            kwargs[name] = _coerce(kind, name, obj[name], issues, line_no)
        else:
            kwargs[name] = default.copy() if isinstance(default, dict) else default
    record = cls(**kwargs)
    for problem in record.problems():
        issues.append(DatasetIssue("invariant_violation", line_no, problem))
    return record


def record_to_obj(record) -> dict:
    kind = kind_of(record)
    obj = {}
    for name in _FIELD_ORDER[kind]:
        value = getattr(record, name)
        obj[name] = list(value) if isinstance(value, tuple) else value
    return obj


def read_dataset(path: str | Path, kind: str) -> list:
    """Read one JSONL dataset file, validating every record.

    Raises DatasetValidationError carrying every issue found in the file,
    each tagged with its 1-based line number.
    """
    if kind not in _SCHEMAS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    path = Path(path)
    records = []
    issues: list[DatasetIssue] = []
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                issues.append(DatasetIssue("malformed_line", line_no, "blank line"))
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                issues.append(DatasetIssue("malformed_line", line_no, f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                issues.append(DatasetIssue("malformed_line", line_no, "line is not a JSON object"))
                continue
            records.append(record_from_obj(kind, obj, line_no, issues))
    if issues:
        raise DatasetValidationError(str(path), issues)
    return records


def write_dataset(records: Iterable, path: str | Path) -> int:
    """Write records as JSONL with the documented key order; returns the count.

    Identical record lists produce byte-identical files.
    """
    path = Path(path)
    lines = []
    first_kind = None
    for i, record in enumerate(records):
        kind = kind_of(record)
        if first_kind is None:
            first_kind = kind
        elif kind != first_kind:
            raise MixedRecordKinds(
                f"record {i + 1} is {kind!r} in a {first_kind!r} file")
        problems = record.problems()
        if problems:
            raise DatasetValidationError(
                str(path),
                [DatasetIssue("invariant_violation", i + 1, p) for p in problems],
            )
        lines.append(json.dumps(record_to_obj(record), ensure_ascii=False))
    try:
        with path.open("w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(line + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return len(lines)


def validate_references(records: Sequence[RetrievalPairExample],
                        known_chunk_ids: Iterable[str]) -> list[tuple[int, str]]:
    """Return (record_index, chunk_id) for every unresolvable chunk reference."""
    known = set(known_chunk_ids)
    missing = []
    for i, rec in enumerate(records):
        for cid in (*rec.positive_chunk_ids, *rec.negative_chunk_ids):
            if cid not in known:
                missing.append((i, cid))
    return missing
