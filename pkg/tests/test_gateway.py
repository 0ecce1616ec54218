import json

import httpx
import numpy as np
import pytest

from ragforge.errors import (
    ConfigError,
    ContextOverflow,
    DimensionMismatch,
    DuplicateModel,
    EndpointError,
    InvalidEmbedding,
    ModelNotFound,
)
from ragforge.gateway import (
    BACKOFF_SECONDS,
    GenerationRequest,
    ModelGateway,
    ModelRegistry,
    ModelSpec,
    split_deltas,
)
from ragforge.mocks import HashEmbedder


class FakeClient:
    """Stands in for httpx.Client; pops one scripted outcome per send."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def build_request(self, method, url, json=None, headers=None):
        return httpx.Request(method, url, json=json, headers=headers)

    def send(self, request, stream=False):
        self.requests.append(request)
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def http_registry(**spec_kwargs):
    registry = ModelRegistry()
    defaults = dict(role="embedder", kind="http_endpoint",
                    endpoint_url="http://models.test/v1", dim=4)
    registry.register(ModelSpec("remote", **(defaults | spec_kwargs)))
    return registry


def make_gateway(outcomes, **spec_kwargs):
    client = FakeClient(outcomes)
    sleeps = []
    gw = ModelGateway(http_registry(**spec_kwargs), http_client=client,
                      sleeper=sleeps.append, jitter=lambda: 0.0)
    return gw, client, sleeps


def embed_response(vectors, shuffle=False):
    data = [{"index": i, "embedding": v} for i, v in enumerate(vectors)]
    if shuffle:
        data = data[::-1]
    return httpx.Response(200, json={"data": data})


def test_embed_http_roundtrip_sorts_by_index():
    gw, client, _ = make_gateway(
        [embed_response([[1, 0, 0, 0], [0, 1, 0, 0]], shuffle=True)])
    out = gw.embed("remote", ["a", "b"])
    np.testing.assert_array_equal(
        out, np.asarray([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=np.float32))
    req = client.requests[0]
    assert str(req.url) == "http://models.test/v1/embeddings"
    body = json.loads(req.content)
    assert body == {"model": "remote", "input": ["a", "b"]}


def test_retry_then_success_sleeps_once():
    gw, client, sleeps = make_gateway(
        [httpx.Response(503), embed_response([[1, 0, 0, 0]])])
    out = gw.embed("remote", ["a"])
    assert out.shape == (1, 4)
    assert len(client.requests) == 2
    assert sleeps == [BACKOFF_SECONDS[0]]


def test_non_retryable_status_fails_fast():
    gw, client, sleeps = make_gateway([httpx.Response(401)])
    with pytest.raises(EndpointError) as info:
        gw.embed("remote", ["a"])
    assert info.value.details["status"] == 401
    assert len(client.requests) == 1
    assert sleeps == []


def test_retries_exhausted_after_three_backoffs():
    gw, client, sleeps = make_gateway(
        [httpx.ConnectError("down")] * 4)
    with pytest.raises(EndpointError) as info:
        gw.embed("remote", ["a"])
    assert "after 3 retries" in str(info.value)
    assert len(client.requests) == 4
    assert sleeps == list(BACKOFF_SECONDS)


def test_jitter_scales_backoff():
    client = FakeClient([httpx.Response(503), embed_response([[1, 0, 0, 0]])])
    sleeps = []
    gw = ModelGateway(http_registry(), http_client=client,
                      sleeper=sleeps.append, jitter=lambda: 1.0)
    gw.embed("remote", ["a"])
    assert sleeps == [pytest.approx(BACKOFF_SECONDS[0] * 1.1)]


def test_embed_dimension_checks():
    gw, _, _ = make_gateway([embed_response([[1, 0, 0]])])  # dim 3, spec says 4
    with pytest.raises(DimensionMismatch) as info:
        gw.embed("remote", ["a"])
    assert (info.value.expected, info.value.got) == (4, 3)


def test_embed_rejects_nonfinite_and_zero():
    # hand-built body: this httpx refuses to serialize NaN itself
    nan_body = '{"data": [{"index": 0, "embedding": [1, 0, 0, NaN]}]}'
    gw, _, _ = make_gateway([httpx.Response(
        200, content=nan_body, headers={"content-type": "application/json"})])
    with pytest.raises(InvalidEmbedding):
        gw.embed("remote", ["a"])
    gw2, _, _ = make_gateway([embed_response([[0, 0, 0, 0]])])
    with pytest.raises(InvalidEmbedding):
        gw2.embed("remote", ["a"])


def test_embed_count_mismatch():
    gw, _, _ = make_gateway([embed_response([[1, 0, 0, 0]])])
    with pytest.raises(EndpointError):
        gw.embed("remote", ["a", "b"])


def test_embed_empty_input_no_call():
    gw, client, _ = make_gateway([])
    out = gw.embed("remote", [])
    assert out.shape == (0, 4)
    assert client.requests == []


def test_role_checks():
    gw, _, _ = make_gateway([])
    with pytest.raises(ModelNotFound):
        gw.generate("remote", GenerationRequest(prompt="p"))
    with pytest.raises(ModelNotFound):
        gw.rerank("remote", "q", ["c"])
    with pytest.raises(ModelNotFound):
        gw.embed("missing", ["a"])


def test_generate_http_and_seed_passthrough():
    resp = httpx.Response(
        200, json={"choices": [{"message": {"content": "hi there"}}]})
    gw, client, _ = make_gateway([resp], role="generator", dim=None)
    out = gw.generate("remote", GenerationRequest(prompt="say hi", seed=11))
    assert out == "hi there"
    body = json.loads(client.requests[0].content)
    assert body["messages"] == [{"role": "user", "content": "say hi"}]
    assert body["seed"] == 11
    assert str(client.requests[0].url).endswith("/chat/completions")


def test_context_overflow():
    gw, _, _ = make_gateway([], role="generator", dim=None,
                            max_context_tokens=3)
    with pytest.raises(ContextOverflow) as info:
        gw.generate("remote", GenerationRequest(prompt="one two three four"))
    assert info.value.details == {"prompt_tokens": 4, "max_context_tokens": 3}


def test_stream_generate_http():
    def chunk(text):
        return "data: " + json.dumps(
            {"choices": [{"delta": {"content": text}}]})

    stream_body = "\n".join([chunk("Hel"), chunk("lo "), chunk("world"),
                             "data: [DONE]", chunk("ignored")]) + "\n"
    resp = httpx.Response(200, text=stream_body)
    gw, _, _ = make_gateway([resp], role="generator", dim=None)
    pieces = list(gw.stream_generate("remote", GenerationRequest(prompt="p")))
    assert pieces == ["Hel", "lo ", "world"]


def test_rerank_http_sorted_and_validated():
    resp = httpx.Response(200, json={"results": [
        {"index": 0, "relevance_score": 0.2},
        {"index": 1, "relevance_score": 0.9},
        {"index": 2, "relevance_score": 0.9},
    ]})
    gw, _, _ = make_gateway([resp], role="reranker", dim=None)
    out = gw.rerank("remote", "q", ["a", "b", "c"])
    assert out == [(1, 0.9), (2, 0.9), (0, 0.2)]

    bad = httpx.Response(200, json={"results": [
        {"index": 0, "relevance_score": 0.2},
        {"index": 0, "relevance_score": 0.9},
    ]})
    gw2, _, _ = make_gateway([bad], role="reranker", dim=None)
    with pytest.raises(EndpointError):
        gw2.rerank("remote", "q", ["a", "b"])


def test_rerank_empty_candidates():
    gw, client, _ = make_gateway([], role="reranker", dim=None)
    assert gw.rerank("remote", "q", []) == []
    assert client.requests == []


def test_mock_embedder_matches_direct_use():
    registry = ModelRegistry()
    registry.register(ModelSpec("m", "embedder", "mock", dim=8, seed=3))
    gw = ModelGateway(registry)
    np.testing.assert_array_equal(
        gw.embed("m", ["x", "y"]), HashEmbedder(dim=8, seed=3).embed(["x", "y"]))


def test_bind_mock_overrides_default():
    registry = ModelRegistry()
    registry.register(ModelSpec("g", "generator", "mock"))
    gw = ModelGateway(registry)

    class Fixed:
        def generate(self, request):
            return "fixed"

    gw.bind_mock("g", Fixed())
    assert gw.generate("g", GenerationRequest(prompt="anything")) == "fixed"
    with pytest.raises(ModelNotFound):
        gw.bind_mock("unknown", Fixed())


def test_registry_crud_and_toml(tmp_path):
    registry = ModelRegistry()
    spec = ModelSpec("e1", "embedder", "mock", dim=4)
    registry.register(spec)
    assert "e1" in registry
    with pytest.raises(DuplicateModel):
        registry.register(spec)
    assert registry.get("e1") is spec
    registry.remove("e1")
    assert "e1" not in registry
    with pytest.raises(ModelNotFound):
        registry.remove("e1")

    toml = tmp_path / "models.toml"
    toml.write_text(
        '[[models]]\nmodel_id = "a"\nrole = "embedder"\nkind = "mock"\ndim = 4\n'
        '\n[[models]]\nmodel_id = "b"\nrole = "generator"\nkind = "mock"\n',
        encoding="utf-8")
    loaded = ModelRegistry.from_toml(toml)
    assert [s.model_id for s in loaded.list()] == ["a", "b"]

    toml.write_text('[[models]]\nmodel_id = "a"\nrole = "embedder"\n'
                    'kind = "mock"\ndim = 4\nbogus = 1\n', encoding="utf-8")
    with pytest.raises(ConfigError):
        ModelRegistry.from_toml(toml)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec("x", "embedder", "mock")  # no dim
    with pytest.raises(ConfigError):
        ModelSpec("x", "embedder", "http_endpoint", dim=4)  # no url
    with pytest.raises(ConfigError):
        ModelSpec("x", "oracle", "mock")
    with pytest.raises(ConfigError):
        GenerationRequest(prompt="p", max_tokens=0)
    with pytest.raises(ConfigError):
        GenerationRequest(prompt="p", temperature=-0.1)


def test_split_deltas_concat_identity():
    samples = ["", "a", "hello world", "  leading", "trailing  ",
               "tabs\tand\nnewlines", "a  b", "こん にち"]
    for text in samples:
        assert "".join(split_deltas(text)) == text
    assert split_deltas("") == [""]
    assert split_deltas("a b") == ["a", " ", "b"]
