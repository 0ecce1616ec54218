"""Model registry and the gateway every module calls models through.

Two kinds of model are supported per role (embedder, reranker, generator):

  http_endpoint   OpenAI-style REST: POST {url}/embeddings and
                  {url}/chat/completions, plus POST {url}/rerank in the
                  Cohere/Jina response shape.  Transient failures (connection
                  errors, 429, 5xx) are retried up to 3 times with backoff
                  0.25s / 1s / 4s plus up to 10% jitter.
  mock            In-process deterministic models; the default implementation
                  per role comes from the mocks module, and tests may bind
                  their own scripted objects.

The registry file is TOML with repeated [[models]] tables; see ModelSpec for
the accepted keys.
"""

from __future__ import annotations

import json
import os
import random
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import httpx
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import (
    ConfigError,
    ContextOverflow,
    DimensionMismatch,
    DuplicateModel,
    EndpointError,
    InvalidEmbedding,
    ModelNotFound,
)
from .tokenizer import token_count

ROLES = ("embedder", "reranker", "generator")
KINDS = ("http_endpoint", "mock")

BACKOFF_SECONDS = (0.25, 1.0, 4.0)
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})

DEFAULT_TIMEOUT = httpx.Timeout(connect=5.0, read=120.0, write=120.0, pool=5.0)


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    role: str
    kind: str
    endpoint_url: str | None = None
    api_key_env: str | None = None
    api_name: str | None = None
    dim: int | None = None
    max_context_tokens: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.model_id:
            raise ConfigError("model_id must be non-empty")
        if self.role not in ROLES:
            raise ConfigError(f"model {self.model_id!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise ConfigError(f"model {self.model_id!r}: unknown kind {self.kind!r}")
        if self.kind == "http_endpoint" and not self.endpoint_url:
            raise ConfigError(f"model {self.model_id!r}: http_endpoint needs endpoint_url")
        if self.role == "embedder":
            if self.dim is None or self.dim < 2:
                raise ConfigError(f"model {self.model_id!r}: embedder needs dim >= 2")

    @property
    def wire_name(self) -> str:
        return self.api_name or self.model_id


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 256
    stream: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")


class ModelRegistry:
    """Named model specs; ids are unique and lookups fail loudly."""

    def __init__(self):
        self._specs: dict[str, ModelSpec] = {}

    def register(self, spec: ModelSpec) -> None:
        if spec.model_id in self._specs:
            raise DuplicateModel(f"model {spec.model_id!r} already registered")
        self._specs[spec.model_id] = spec

    def get(self, model_id: str) -> ModelSpec:
        try:
            return self._specs[model_id]
        except KeyError:
            raise ModelNotFound(f"model {model_id!r} is not registered") from None

    def remove(self, model_id: str) -> None:
        if model_id not in self._specs:
            raise ModelNotFound(f"model {model_id!r} is not registered")
        del self._specs[model_id]

    def list(self) -> list[ModelSpec]:
        return [self._specs[k] for k in sorted(self._specs)]

    def __contains__(self, model_id: str) -> bool:
        return model_id in self._specs

    @classmethod
    def from_toml(cls, path: str | Path) -> "ModelRegistry":
        with Path(path).open("rb") as f:
            data = tomllib.load(f)
        registry = cls()
        for entry in data.get("models", []):
            unknown = set(entry) - {
                "model_id", "role", "kind", "endpoint_url", "api_key_env",
                "api_name", "dim", "max_context_tokens", "seed",
            }
            if unknown:
                raise ConfigError(f"unknown model keys {sorted(unknown)} in {path}")
            registry.register(ModelSpec(**entry))
        return registry


class ModelGateway:
    """Dispatches embed/generate/rerank calls to the registered backend.

    Safe for concurrent use; mock implementations are constructed once per
    model id and reused.
    """

    def __init__(self, registry: ModelRegistry,
                 http_client: httpx.Client | None = None,
                 sleeper: Callable[[float], None] = time.sleep,
                 jitter: Callable[[], float] = random.random):
        self.registry = registry
        self._client = http_client
        self._sleep = sleeper
        self._jitter = jitter
        self._mocks: dict[str, object] = {}

    # -- mock plumbing -----------------------------------------------------

    def bind_mock(self, model_id: str, impl: object) -> None:
        """Attach a custom implementation for a registered mock model."""
        self.registry.get(model_id)
        self._mocks[model_id] = impl

    def _mock_impl(self, spec: ModelSpec) -> object:
        if spec.model_id not in self._mocks:
            from . import mocks  # deferred: mocks type-checks against this module

            if spec.role == "embedder":
                impl: object = mocks.HashEmbedder(dim=spec.dim, seed=spec.seed)
            elif spec.role == "generator":
                impl = mocks.DemoGenerator()
            else:
                impl = mocks.LexicalOverlapReranker()
            self._mocks[spec.model_id] = impl
        return self._mocks[spec.model_id]

    # -- http plumbing -----------------------------------------------------

    def _http(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=DEFAULT_TIMEOUT)
        return self._client

    def _headers(self, spec: ModelSpec) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if spec.api_key_env:
            key = os.environ.get(spec.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_with_retries(self, spec: ModelSpec, route: str, payload: dict,
                           stream: bool = False):
        url = spec.endpoint_url.rstrip("/") + route
        last_status = 0
        last_detail = "connection failed"
        for attempt in range(1 + len(BACKOFF_SECONDS)):
            try:
                req = self._http().build_request(
                    "POST", url, json=payload, headers=self._headers(spec))
                resp = self._http().send(req, stream=stream)
            except httpx.TransportError as exc:
                last_status, last_detail = 0, str(exc)
            else:
                if resp.status_code == 200:
                    return resp
                if stream:
                    resp.read()
                resp.close()
                last_status = resp.status_code
                last_detail = f"HTTP {resp.status_code} from {url}"
                if resp.status_code not in RETRYABLE_STATUSES:
                    raise EndpointError(last_detail, status=last_status)
            if attempt < len(BACKOFF_SECONDS):
                self._sleep(BACKOFF_SECONDS[attempt] * (1.0 + 0.1 * self._jitter()))
        raise EndpointError(f"{last_detail} (after {len(BACKOFF_SECONDS)} retries)",
                            status=last_status)

    # -- embeddings --------------------------------------------------------

    def embed(self, model_id: str, texts: list[str]) -> np.ndarray:
        """Embeds texts in input order; returns a (len(texts), dim) float32 array."""
        spec = self.registry.get(model_id)
        if spec.role != "embedder":
            raise ModelNotFound(f"model {model_id!r} has role {spec.role}, not embedder")
        if not texts:
            return np.empty((0, spec.dim), dtype=np.float32)
        if spec.kind == "mock":
            vectors = self._mock_impl(spec).embed(list(texts))
        else:
            resp = self._post_with_retries(
                spec, "/embeddings", {"model": spec.wire_name, "input": list(texts)})
            rows = sorted(resp.json().get("data", []), key=lambda r: r.get("index", 0))
            if len(rows) != len(texts):
                raise EndpointError(
                    f"embedding endpoint returned {len(rows)} vectors for "
                    f"{len(texts)} inputs", status=200)
            vectors = np.asarray([r["embedding"] for r in rows], dtype=np.float32)
        if vectors.shape[1] != spec.dim:
            raise DimensionMismatch(expected=spec.dim, got=int(vectors.shape[1]))
        if not np.all(np.isfinite(vectors)):
            raise InvalidEmbedding(f"model {model_id!r} returned non-finite values")
        if np.any(np.linalg.norm(vectors, axis=1) == 0.0):
            raise InvalidEmbedding(f"model {model_id!r} returned a zero vector")
        return vectors

    # -- generation --------------------------------------------------------

    def _check_context(self, spec: ModelSpec, request: GenerationRequest) -> None:
        if spec.max_context_tokens is not None:
            n = token_count(request.prompt)
            if n > spec.max_context_tokens:
                raise ContextOverflow(prompt_tokens=n,
                                      max_context_tokens=spec.max_context_tokens)

    def _generator_spec(self, model_id: str) -> ModelSpec:
        spec = self.registry.get(model_id)
        if spec.role != "generator":
            raise ModelNotFound(f"model {model_id!r} has role {spec.role}, not generator")
        return spec

    def generate(self, model_id: str, request: GenerationRequest) -> str:
        spec = self._generator_spec(model_id)
        self._check_context(spec, request)
        if spec.kind == "mock":
            return self._mock_impl(spec).generate(request)
        payload = {
            "model": spec.wire_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        resp = self._post_with_retries(spec, "/chat/completions", payload)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, json.JSONDecodeError) as exc:
            raise EndpointError(f"malformed completion response: {exc}", status=200)

    def stream_generate(self, model_id: str, request: GenerationRequest) -> Iterator[str]:
        """Yields text deltas whose concatenation equals the full completion."""
        spec = self._generator_spec(model_id)
        self._check_context(spec, request)
        if spec.kind == "mock":
            text = self._mock_impl(spec).generate(request)
            yield from split_deltas(text)
            return
        payload = {
            "model": spec.wire_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stream": True,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        resp = self._post_with_retries(spec, "/chat/completions", payload, stream=True)
        try:
            for line in resp.iter_lines():
                if not line.startswith("data:"):
                    continue
                data = line[len("data:"):].strip()
                if data == "[DONE]":
                    break
                try:
                    delta = json.loads(data)["choices"][0].get("delta", {})
                except (KeyError, IndexError, json.JSONDecodeError) as exc:
                    raise EndpointError(f"malformed stream chunk: {exc}", status=200)
                piece = delta.get("content", "")
                if piece:
                    yield piece
        finally:
            resp.close()

    # -- reranking ---------------------------------------------------------

    def rerank(self, model_id: str, query: str,
               candidates: list[str]) -> list[tuple[int, float]]:
        """Returns (input index, score) pairs sorted by score desc, index asc."""
        spec = self.registry.get(model_id)
        if spec.role != "reranker":
            raise ModelNotFound(f"model {model_id!r} has role {spec.role}, not reranker")
        if not candidates:
            return []
        if spec.kind == "mock":
            return self._mock_impl(spec).rerank(query, list(candidates))
        resp = self._post_with_retries(
            spec, "/rerank",
            {"model": spec.wire_name, "query": query, "documents": list(candidates)})
        try:
            results = [(int(r["index"]), float(r["relevance_score"]))
                       for r in resp.json()["results"]]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise EndpointError(f"malformed rerank response: {exc}", status=200)
        if sorted(i for i, _ in results) != list(range(len(candidates))):
            raise EndpointError("rerank response is not a permutation of the input",
                                status=200)
        results.sort(key=lambda pair: (-pair[1], pair[0]))
        return results


def split_deltas(text: str) -> list[str]:
    """Cuts text into whitespace/word pieces that concatenate back exactly."""
    pieces = re.findall(r"\s+|\S+", text)
    return pieces if pieces else [""]
