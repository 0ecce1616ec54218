"""Whitespace tokenizer with punctuation detachment.

This is the default tokenizer used for chunking, context budgeting, and
lexical scoring. It is pure and deterministic: split on Unicode whitespace,
then detach leading and trailing punctuation characters as separate tokens.
Callers are expected to pass NFC-normalized text (ingestion normalizes).

The join rule for detokenization is a single space; chunk text is defined
as the detokenized form of its token span.
"""

from __future__ import annotations

import unicodedata

DEFAULT_TOKENIZER_ID = "whitespace.v1"


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def default_tokenizer(text: str) -> list[str]:
    tokens: list[str] = []
    for word in text.split():
        lead: list[str] = []
        while word and _is_punct(word[0]):
            lead.append(word[0])
            word = word[1:]
        trail: list[str] = []
        while word and _is_punct(word[-1]):
            trail.append(word[-1])
            word = word[:-1]
        tokens.extend(lead)
        if word:
            tokens.append(word)
        tokens.extend(reversed(trail))
    return tokens


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


def token_count(text: str) -> int:
    return len(default_tokenizer(text))
