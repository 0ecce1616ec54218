"""Ranking and generation quality metrics.

Ranking metrics use binary relevance (membership in the gold id set).
Generation metrics tokenize with the default tokenizer after case-folding;
tokens containing CJK characters are split into single characters, the
standard adaptation for unsegmented scripts.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .tokenizer import default_tokenizer

_CJK_RANGES = (
    (0x3040, 0x30FF),    # kana
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def metric_tokens(text: str) -> list[str]:
    out: list[str] = []
    for token in default_tokenizer(text.casefold()):
        if any(_is_cjk(ch) for ch in token):
            out.extend(token)
        else:
            out.append(token)
    return out


# -- ranking metrics -------------------------------------------------------


def mrr_at_k(ranked_ids: Sequence[str], gold_ids: Iterable[str], k: int) -> float:
    """1/rank of the first gold id within the top k, else 0."""
    gold = set(gold_ids)
    for i, cid in enumerate(ranked_ids[:k]):
        if cid in gold:
            return 1.0 / (i + 1)
    return 0.0


def ndcg_at_k(ranked_ids: Sequence[str], gold_ids: Iterable[str], k: int) -> float:
    gold = set(gold_ids)
    if not gold:
        return 0.0
    dcg = sum(1.0 / math.log2(i + 2)
              for i, cid in enumerate(ranked_ids[:k]) if cid in gold)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(len(gold), k)))
    return dcg / idcg


def recall_at_k(ranked_ids: Sequence[str], gold_ids: Iterable[str], k: int) -> float:
    gold = set(gold_ids)
    if not gold:
        return 0.0
    return len(gold & set(ranked_ids[:k])) / len(gold)


# -- generation metrics ----------------------------------------------------


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f: float
    degenerate: bool = False  # a side tokenized to nothing


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Classic O(len(a)*len(b)) dynamic program, one rolling row."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    cand = metric_tokens(candidate)
    ref = metric_tokens(reference)
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0, degenerate=True)
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return RougeScore(precision, recall, f)


def best_rouge_l_f(candidate: str, references: Iterable[str]) -> float:
    return max((rouge_l(candidate, ref).f for ref in references), default=0.0)


def exact_match(candidate: str, references: Iterable[str]) -> float:
    """1.0 if the candidate token sequence equals any reference's."""
    cand = metric_tokens(candidate)
    return 1.0 if any(cand == metric_tokens(ref) for ref in references) else 0.0


def token_f1(candidate: str, reference: str) -> float:
    cand = Counter(metric_tokens(candidate))
    ref = Counter(metric_tokens(reference))
    common = sum((cand & ref).values())
    if common == 0:
        return 0.0
    precision = common / sum(cand.values())
    recall = common / sum(ref.values())
    return 2 * precision * recall / (precision + recall)


def best_token_f1(candidate: str, references: Iterable[str]) -> float:
    return max((token_f1(candidate, ref) for ref in references), default=0.0)
