"""Training-data construction from a knowledge base.

Four synthesis paths, all pure functions of (config seed, KB snapshot,
generator behavior) so seeded runs are record-identical:

  synthesize_queries      query per chunk via a prompt template
  mine_hard_negatives     negatives drawn from a mid-rank search window
  build_ddr_preferences   multi-temperature sampling scored against gold,
                          best/worst pair kept when the reward gap is wide
  build_kbalign_sft       single-chunk and cross-document Q/A annotations

Plus mix() for weighted dataset unions and export_training_files() for the
trainer-facing JSONL shapes.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import (
    ConfigError,
    EmptyGeneration,
    EndpointError,
    GeneratorUnavailable,
    InsufficientCorpus,
    IoFailure,
    MalformedGeneration,
    MixedRecordKinds,
    NoGoldAnswer,
)
from .gateway import GenerationRequest, ModelGateway
from .knowledge import KnowledgeBase
from .metrics import best_rouge_l_f
from .records import (
    PreferencePair,
    QAExample,
    RetrievalPairExample,
    SFTExample,
    kind_of,
    record_to_obj,
)
from .retrieval import search
from .templates import DEFAULT_TEMPLATE_IDS, render, render_context

KEYPOINT_SEPARATOR = "|"  # metadata["keypoints"] holds "point|point|point"


@dataclass(frozen=True)
class SynthesisConfig:
    queries_per_chunk: int = 1
    negative_window: tuple[int, int] = (2, 30)
    negatives_per_query: int = 7
    reward_fn: str = "rouge_l"  # rouge_l | keypoint_recall
    samples_per_query: int = 4
    temperatures: tuple[float, ...] = (0.0, 0.3, 0.7, 1.0)
    reward_gap_min: float = 0.05
    seed: int = 0
    k_context: int = 5
    max_tokens: int = 256

    def __post_init__(self):
        if self.queries_per_chunk < 1:
            raise ConfigError("queries_per_chunk must be >= 1")
        lo, hi = self.negative_window
        if lo < 2:
            raise ConfigError(f"negative window must start at rank >= 2, got {lo}")
        if hi < lo:
            raise ConfigError(f"negative window [{lo}, {hi}] is empty")
        if self.negatives_per_query < 1:
            raise ConfigError("negatives_per_query must be >= 1")
        if self.reward_fn not in ("rouge_l", "keypoint_recall"):
            raise ConfigError(f"unknown reward_fn {self.reward_fn!r}")
        if self.samples_per_query < 2:
            raise ConfigError("samples_per_query must be >= 2")
        if len(self.temperatures) not in (1, self.samples_per_query):
            raise ConfigError(
                "temperatures must list one value or one per sample, got "
                f"{len(self.temperatures)} for {self.samples_per_query} samples")
        if self.reward_gap_min < 0:
            raise ConfigError("reward_gap_min must be >= 0")

    def resolved_temperatures(self) -> tuple[float, ...]:
        if len(self.temperatures) == self.samples_per_query:
            return self.temperatures
        return self.temperatures * self.samples_per_query

    @classmethod
    def from_obj(cls, obj: dict) -> "SynthesisConfig":
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"unknown synthesis config keys: {sorted(unknown)}")
        coerced = dict(obj)
        for key in ("negative_window", "temperatures"):
            if key in coerced:
                coerced[key] = tuple(coerced[key])
        return cls(**coerced)


def _generate(gateway: ModelGateway, generator_id: str,
              request: GenerationRequest) -> str:
    try:
        return gateway.generate(generator_id, request)
    except EndpointError as exc:
        raise GeneratorUnavailable(str(exc)) from exc


def plan_query_synthesis(target_samples: int, queries_per_chunk: int) -> int:
    """Chunks needed to hit a sample target at the configured rate."""
    if target_samples < 1 or queries_per_chunk < 1:
        raise ConfigError("target_samples and queries_per_chunk must be >= 1")
    return math.ceil(target_samples / queries_per_chunk)


def synthesize_queries(kb: KnowledgeBase, gateway: ModelGateway, generator_id: str,
                       cfg: SynthesisConfig,
                       limit_chunks: int | None = None
                       ) -> tuple[list[tuple[str, str]], dict]:
    """(query, source_chunk_id) pairs plus counters; exact-duplicate queries
    keep their first occurrence only."""
    chunks = kb.chunks
    if not chunks:
        raise InsufficientCorpus("knowledge base has no chunks")
    if limit_chunks is not None and limit_chunks < len(chunks):
        rng = random.Random(cfg.seed)
        keep = sorted(rng.sample(range(len(chunks)), limit_chunks))
        chunks = [chunks[i] for i in keep]
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    generated = 0
    for chunk in chunks:
        for variant in range(1, cfg.queries_per_chunk + 1):
            prompt = render(DEFAULT_TEMPLATE_IDS["synth_query"],
                            variant=str(variant), passage=chunk.text)
            query = _generate(gateway, generator_id, GenerationRequest(
                prompt=prompt, temperature=0.0, max_tokens=cfg.max_tokens)).strip()
            if not query:
                raise EmptyGeneration(chunk_id=chunk.chunk_id, attempt=variant)
            generated += 1
            if query in seen:
                continue
            seen.add(query)
            pairs.append((query, chunk.chunk_id))
    stats = {"generated": generated, "kept": len(pairs),
             "deduplicated": generated - len(pairs)}
    return pairs, stats


def mine_hard_negatives(kb: KnowledgeBase, gateway: ModelGateway,
                        pairs: Sequence[tuple[str, str]],
                        cfg: SynthesisConfig) -> list[RetrievalPairExample]:
    """Negatives are sampled from search ranks [lo, hi] with the positive
    removed; ranks are the original search ranks, not renumbered."""
    rank_lo, rank_hi = cfg.negative_window
    rng = random.Random(cfg.seed)
    out = []
    for query, positive_id in pairs:
        hits = search(kb, gateway, query, k=rank_hi)
        candidates = [h.chunk_id for h in hits
                      if h.chunk_id != positive_id and rank_lo <= h.rank <= rank_hi]
        take = min(cfg.negatives_per_query, len(candidates))
        chosen = rng.sample(candidates, take) if take else []
        chosen.sort(key=candidates.index)  # present negatives in rank order
        out.append(RetrievalPairExample(
            query=query,
            positive_chunk_ids=(positive_id,),
            negative_chunk_ids=tuple(chosen)))
    return out


def _keypoints(example: QAExample) -> list[str]:
    raw = example.metadata.get("keypoints", "")
    if raw:
        return [p for p in raw.split(KEYPOINT_SEPARATOR) if p]
    # no annotated keypoints: fall back to the gold answers themselves
    return list(example.answers)


def _reward(cfg: SynthesisConfig, response: str, example: QAExample) -> float:
    if cfg.reward_fn == "rouge_l":
        return best_rouge_l_f(response, example.answers)
    points = _keypoints(example)
    if not points:
        return 0.0
    hits = sum(1 for p in points if p.casefold() in response.casefold())
    return hits / len(points)


def build_ddr_preferences(kb: KnowledgeBase, gateway: ModelGateway,
                          qa: Sequence[QAExample], generator_id: str,
                          cfg: SynthesisConfig
                          ) -> tuple[list[PreferencePair], dict]:
    """Best-vs-worst sampled responses per query; ties pick the earliest
    sample; pairs under the reward gap are skipped and counted."""
    out = []
    skipped = 0
    temperatures = cfg.resolved_temperatures()
    for example in qa:
        if not example.answers:
            raise NoGoldAnswer(example.example_id)
        hits = search(kb, gateway, example.query, k=cfg.k_context)
        context = render_context(
            [(h.chunk_id, kb.chunk(h.chunk_id).text) for h in hits])
        prompt = render(DEFAULT_TEMPLATE_IDS["rag_answer"],
                        context=context, query=example.query)
        samples = [
            _generate(gateway, generator_id, GenerationRequest(
                prompt=prompt, temperature=t, max_tokens=cfg.max_tokens,
                seed=cfg.seed))
            for t in temperatures
        ]
        rewards = [_reward(cfg, s, example) for s in samples]
        best = worst = 0
        for j in range(1, len(rewards)):
            if rewards[j] > rewards[best]:
                best = j
            if rewards[j] < rewards[worst]:
                worst = j
        gap = rewards[best] - rewards[worst]
        if gap < cfg.reward_gap_min:
            skipped += 1
            continue
        out.append(PreferencePair(
            prompt=prompt, chosen=samples[best], rejected=samples[worst],
            chosen_reward=rewards[best], rejected_reward=rewards[worst]))
    return out, {"examples": len(qa), "emitted": len(out), "skipped_low_gap": skipped}


_Q_LINE = re.compile(r"^Q:[ ]?(.+)$", re.MULTILINE)
_A_LINE = re.compile(r"^A:[ ]?(.+)$", re.MULTILINE)


def _parse_qa(output: str, where: str) -> tuple[str, str]:
    q = _Q_LINE.search(output)
    a = _A_LINE.search(output)
    if not q or not a:
        raise MalformedGeneration(
            f"{where}: expected 'Q:' and 'A:' lines, got {output[:120]!r}")
    return q.group(1).strip(), a.group(1).strip()


def build_kbalign_sft(kb: KnowledgeBase, gateway: ModelGateway, generator_id: str,
                      cfg: SynthesisConfig, n_short: int,
                      n_long: int) -> list[SFTExample]:
    """Self-supervised Q/A annotations.

    Short range grounds each example in a single chunk.  Long range samples
    2 to 3 chunks from distinct documents; a single-document corpus falls
    back to distinct chunks of that document with a warning.
    """
    if n_short < 0 or n_long < 0:
        raise ConfigError("n_short and n_long must be >= 0")
    if n_long > 0 and len(kb.chunks) < 2:
        raise InsufficientCorpus("long-range annotations need at least 2 chunks")
    rng = random.Random(cfg.seed)
    out = []

    take_short = min(n_short, len(kb.chunks))
    if take_short:
        picked = sorted(rng.sample(range(len(kb.chunks)), take_short))
        for i in picked:
            chunk = kb.chunks[i]
            output = _generate(gateway, generator_id, GenerationRequest(
                prompt=render(DEFAULT_TEMPLATE_IDS["kbalign_short"],
                              passage=chunk.text),
                max_tokens=cfg.max_tokens))
            question, answer = _parse_qa(output, f"short-range on {chunk.chunk_id}")
            out.append(SFTExample(
                prompt=question, response=answer, annotation_range="short",
                metadata={"source_chunks": chunk.chunk_id}))

    by_doc: dict[str, list[int]] = {}
    for i, chunk in enumerate(kb.chunks):
        by_doc.setdefault(chunk.doc_id, []).append(i)
    doc_ids = sorted(by_doc)
    if n_long > 0 and len(doc_ids) < 2:
        warnings.warn("long-range annotations from a single document; "
                      "cross-document integration is degraded", stacklevel=2)
    for _ in range(n_long):
        if len(doc_ids) >= 2:
            group = min(2 + rng.randrange(2), len(doc_ids))
            docs = sorted(rng.sample(doc_ids, group))
            rows = [rng.choice(by_doc[d]) for d in docs]
        else:
            group = min(2 + rng.randrange(2), len(kb.chunks))
            rows = sorted(rng.sample(range(len(kb.chunks)), group))
        chunks = [kb.chunks[i] for i in rows]
        passages = render_context([(c.chunk_id, c.text) for c in chunks])
        output = _generate(gateway, generator_id, GenerationRequest(
            prompt=render(DEFAULT_TEMPLATE_IDS["kbalign_long"], passages=passages),
            max_tokens=cfg.max_tokens))
        question, answer = _parse_qa(
            output, "long-range on " + ",".join(c.chunk_id for c in chunks))
        out.append(SFTExample(
            prompt=question, response=answer, annotation_range="long",
            metadata={"source_chunks": ",".join(c.chunk_id for c in chunks)}))
    return out


def mix(datasets: Sequence[Sequence], weights: Sequence[float],
        seed: int, total: int | None = None) -> list:
    """Weighted shuffled union; per-source counts are floor(weight * total)
    with the remainder going to the largest fractional parts."""
    if len(datasets) != len(weights):
        raise ConfigError("one weight per dataset required")
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ConfigError("weights must be non-negative and sum > 0")
    if total is None:
        total = sum(len(d) for d in datasets)
    scale = sum(weights)
    shares = [w / scale * total for w in weights]
    counts = [min(math.floor(s), len(d)) for s, d in zip(shares, datasets)]
    remainders = sorted(range(len(datasets)),
                        key=lambda i: (-(shares[i] - math.floor(shares[i])), i))
    leftover = total - sum(counts)
    for i in remainders:
        if leftover <= 0:
            break
        if counts[i] < len(datasets[i]):
            counts[i] += 1
            leftover -= 1
    rng = random.Random(seed)
    union: list = []
    for d, c in zip(datasets, counts):
        union.extend(rng.sample(list(d), c))
    rng.shuffle(union)
    return union


EXPORT_KINDS = {"dpo_jsonl": "preference", "sft_jsonl": "sft",
                "retrieval_jsonl": "retrieval_pair"}


def export_training_files(records: Sequence, format: str, path: str | Path,
                          kb: KnowledgeBase | None = None) -> int:
    """Writes the trainer-facing shapes: dpo {prompt, chosen, rejected};
    sft {prompt, response}; retrieval {query, pos, neg} with chunk texts
    inlined from the KB."""
    if format not in EXPORT_KINDS:
        raise ConfigError(f"unknown export format {format!r}")
    kinds = {kind_of(r) for r in records}
    if len(kinds) > 1:
        raise MixedRecordKinds(f"records mix kinds {sorted(kinds)}")
    if records and kinds != {EXPORT_KINDS[format]}:
        raise MixedRecordKinds(
            f"format {format} needs {EXPORT_KINDS[format]} records, got {kinds.pop()}")
    lines = []
    for record in records:
        obj = record_to_obj(record)
        if format == "dpo_jsonl":
            row = {"prompt": obj["prompt"], "chosen": obj["chosen"],
                   "rejected": obj["rejected"]}
        elif format == "sft_jsonl":
            row = {"prompt": obj["prompt"], "response": obj["response"]}
        else:
            if kb is None:
                raise ConfigError("retrieval export needs the knowledge base "
                                  "to inline chunk texts")
            pos = [c.text for c in kb.resolve_chunks(list(record.positive_chunk_ids))]
            neg = [c.text for c in kb.resolve_chunks(list(record.negative_chunk_ids))]
            row = {"query": obj["query"], "pos": pos, "neg": neg}
        lines.append(json.dumps(row, ensure_ascii=False))
    try:
        with Path(path).open("w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(line + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return len(lines)
