"""Deterministic in-process models for hermetic tests and demos.

Every construction here is documented precisely enough to recompute by hand:

  hash64(text)      first 8 bytes of BLAKE2b(NFC(text)), little-endian
  SplitMix64        the standard 64-bit mixer, state advances by 0x9E3779B97F4A7C15
  HashEmbedder      seed SplitMix64 with hash64(text) XOR seed, draw dim
                    Box-Muller normals, normalize to unit L2

Equal texts therefore embed identically and distinct texts collide with
negligible probability, which is all vector search needs for testing.
"""

from __future__ import annotations

import hashlib
import math
import re
import unicodedata
from typing import TYPE_CHECKING, Callable, Mapping

import numpy as np

from .tokenizer import default_tokenizer

if TYPE_CHECKING:
    from .gateway import GenerationRequest

MASK64 = (1 << 64) - 1


def hash64(text: str) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class SplitMix64:
    """Tiny seedable PRNG; good enough statistics for synthetic vectors."""

    def __init__(self, state: int):
        self.state = state & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        # uniform in [0, 1)
        return self.next_u64() / 2.0**64


def standard_normals(rng: SplitMix64, n: int) -> list[float]:
    """n Box-Muller draws; an odd n discards the last of the final pair."""
    out: list[float] = []
    while len(out) < n:
        u1 = 1.0 - rng.next_float()  # (0, 1], keeps log finite
        u2 = rng.next_float()
        r = math.sqrt(-2.0 * math.log(u1))
        out.append(r * math.cos(2.0 * math.pi * u2))
        out.append(r * math.sin(2.0 * math.pi * u2))
    return out[:n]


class HashEmbedder:
    """Maps text to a reproducible unit vector; no model weights involved."""

    def __init__(self, dim: int, seed: int = 0):
        if dim < 2:
            raise ValueError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        self.seed = seed

    def _vector(self, text: str) -> np.ndarray:
        state = hash64(unicodedata.normalize("NFC", text)) ^ (self.seed & MASK64)
        v = np.asarray(standard_normals(SplitMix64(state), self.dim))
        return (v / np.linalg.norm(v)).astype(np.float32)

    def embed(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            out[i] = self._vector(text)
        return out


class ScriptedGenerator:
    """Plays back a prompt -> response table, or defers to a callable."""

    def __init__(self, script: Mapping[str, str] | Callable[["GenerationRequest"], str]):
        self.script = script

    def generate(self, request: "GenerationRequest") -> str:
        if callable(self.script):
            return self.script(request)
        try:
            return self.script[request.prompt]
        except KeyError:
            raise LookupError(
                f"no scripted response for prompt starting {request.prompt[:80]!r}"
            ) from None


def _inline(prompt: str, label: str) -> str:
    m = re.search(rf"^{label}:[ ]?(.*)$", prompt, flags=re.MULTILINE)
    return m.group(1) if m else ""


def _block(prompt: str, label: str) -> str:
    """Lines between the '<label>:' header line and the next blank line."""
    lines = prompt.splitlines()
    try:
        i = lines.index(f"{label}:")
    except ValueError:
        return ""
    body = []
    for line in lines[i + 1:]:
        if line == "":
            break
        body.append(line)
    return "\n".join(body)


_TAGGED_LINE = re.compile(r"^\[([^\]]+)\][ ]?(.*)$")


def _tagged_lines(block: str) -> list[tuple[str, str]]:
    out = []
    for line in block.splitlines():
        m = _TAGGED_LINE.match(line)
        if m:
            out.append((m.group(1), m.group(2)))
    return out


def _take(text: str, n: int) -> str:
    return " ".join(default_tokenizer(text)[:n])


class DemoGenerator:
    """Rule-driven stand-in generator keyed off the bundled prompt templates.

    It recognizes a template by its instruction line and produces a plausible,
    fully deterministic completion from the filled-in sections, so the whole
    toolkit can be exercised end to end without any model endpoint.
    """

    def generate(self, request: "GenerationRequest") -> str:
        prompt = request.prompt
        first = prompt.splitlines()[0] if prompt else ""
        if first == "Answer the question using only the provided context.":
            return self._rag_answer(prompt, request.temperature)
        if first == ("Review the note against the new evidence and decide "
                     "whether it needs updating."):
            return self._review(prompt)
        if first == "Rewrite the question to target information the note is still missing.":
            return _inline(prompt, "Question") + " (follow-up)"
        if first == "Answer the question using the accumulated note.":
            note = _block(prompt, "Note")
            return "Based on the note: " + (_take(note, 12) or "(empty)")
        if first.startswith("Write one search query answerable from the passage."):
            m = re.search(r"Variant (\d+)\.", first)
            variant = m.group(1) if m else "0"
            return f"what does {_take(_block(prompt, 'Passage'), 4)} describe ({variant})"
        if first == "Write one question and its answer grounded only in the passage.":
            passage = _block(prompt, "Passage")
            return (f"Q: What does the passage about {_take(passage, 2)} state?\n"
                    f"A: {_take(passage, 10)}")
        if first == "Write one question and its answer that integrate all of the passages.":
            snippets = [_take(text, 3) for _, text in _tagged_lines(_block(prompt, "Passages"))]
            return "Q: How do the passages relate?\nA: They cover " + "; ".join(snippets) + "."
        return "I have no instructions for this prompt."

    def _rag_answer(self, prompt: str, temperature: float) -> str:
        tagged = _tagged_lines(_block(prompt, "Context"))
        if not tagged:
            return "No context was provided."
        chunk_id, text = tagged[0]
        # Higher sampling temperature yields a terser answer; this gives the
        # preference-pair path distinct rewards per temperature.
        n = max(2, 8 - int(temperature * 4))
        return f"According to {chunk_id}: {_take(text, n)}"

    def _review(self, prompt: str) -> str:
        note = _block(prompt, "Note")
        evidence = _tagged_lines(_block(prompt, "Evidence"))
        fresh = [(cid, text) for cid, text in evidence if f"[{cid}]" not in note]
        if not fresh:
            return "VERDICT: KEEP\n" + note
        lines = [note] if note else []
        lines.extend(f"[{cid}] {_take(text, 6)}" for cid, text in fresh)
        return "VERDICT: UPDATE\n" + "\n".join(lines)


class LexicalOverlapReranker:
    """Scores candidates by case-folded token-set overlap with the query."""

    def rerank(self, query: str, candidates: list[str]) -> list[tuple[int, float]]:
        q = set(default_tokenizer(query.casefold()))
        scored = [(i, float(len(q & set(default_tokenizer(c.casefold())))))
                  for i, c in enumerate(candidates)]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored


class IdentityReranker:
    """Keeps the input order; scores are descending positions."""

    def rerank(self, query: str, candidates: list[str]) -> list[tuple[int, float]]:
        n = len(candidates)
        return [(i, float(n - i)) for i in range(n)]
