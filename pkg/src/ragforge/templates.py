"""Versioned prompt templates bundled with the package.

A template id "name@v1" maps to the data file templates/name.v1.txt.  Files
use ${placeholder} substitution so literal braces inside chunk text never
collide with the template syntax.  Outputs that embed a template reference it
by id, which pins the exact wording used for a given artifact.
"""

from __future__ import annotations

import re
import string
from importlib import resources
from typing import Iterable

from .errors import ConfigError, NotFound

_ID_RE = re.compile(r"^([a-z0-9_]+)@(v[0-9]+)$")

DEFAULT_TEMPLATE_IDS = {
    "rag_answer": "rag_answer@v1",
    "deepnote_review": "deepnote_review@v1",
    "deepnote_refine": "deepnote_refine@v1",
    "deepnote_answer": "deepnote_answer@v1",
    "synth_query": "synth_query@v1",
    "kbalign_short": "kbalign_short@v1",
    "kbalign_long": "kbalign_long@v1",
}

_cache: dict[str, string.Template] = {}


def _filename(template_id: str) -> str:
    m = _ID_RE.match(template_id)
    if not m:
        raise ConfigError(f"bad template id {template_id!r}; expected name@vN")
    return f"{m.group(1)}.{m.group(2)}.txt"


def load_template(template_id: str) -> string.Template:
    if template_id not in _cache:
        path = resources.files("ragforge").joinpath("templates", _filename(template_id))
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise NotFound(f"template {template_id!r} is not bundled") from None
        _cache[template_id] = string.Template(text)
    return _cache[template_id]


def render(template_id: str, **values: str) -> str:
    try:
        return load_template(template_id).substitute(values)
    except KeyError as exc:
        raise ConfigError(
            f"template {template_id!r} needs a value for placeholder {exc.args[0]!r}"
        ) from None


def render_context(pairs: Iterable[tuple[str, str]]) -> str:
    """One "[chunk_id] text" line per pair, the context shape all prompts use."""
    return "\n".join(f"[{cid}] {text}" for cid, text in pairs)


def list_templates() -> list[str]:
    root = resources.files("ragforge").joinpath("templates")
    ids = []
    for entry in root.iterdir():
        m = re.match(r"^([a-z0-9_]+)\.(v[0-9]+)\.txt$", entry.name)
        if m:
            ids.append(f"{m.group(1)}@{m.group(2)}")
    return sorted(ids)
