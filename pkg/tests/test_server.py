import json
import time

import pytest
from fastapi.testclient import TestClient

from ragforge.config import ServiceConfig
from ragforge.server import build_app

from helpers import mock_gateway

DOC_LINES = "\n".join(
    json.dumps({"text": f"entry {i:02d} about " + " ".join(
        ["kestrel", "lagoon", "marsh", "nettle", "orchid", "pumice"][i % 6]
        for _ in range(3))})
    for i in range(6))


@pytest.fixture()
def client(tmp_path):
    gateway = mock_gateway()
    app = build_app(ServiceConfig(data_dir=tmp_path / "data"),
                    registry=gateway.registry, gateway=gateway)
    with TestClient(app, raise_server_exceptions=False) as c:
        c.data_dir = tmp_path / "data"
        yield c


def wait_job(client, job_id, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/v1/jobs/{job_id}").json()
        if body["status"] in ("done", "failed"):
            return body
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} did not finish")


def wait_eval(client, eval_id, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/v1/eval/{eval_id}").json()
        if body["status"] in ("done", "failed"):
            return body
        time.sleep(0.02)
    raise AssertionError(f"eval {eval_id} did not finish")


def make_kb(client, kb_id="kb1"):
    assert client.post("/v1/kb", json={
        "kb_id": kb_id, "embedder_id": "m-embed"}).status_code == 201
    up = client.post(f"/v1/kb/{kb_id}/documents", json={
        "filename": "docs.jsonl", "format": "jsonl",
        "content": DOC_LINES, "text_column": "text"})
    assert up.status_code == 200
    job = client.post(f"/v1/kb/{kb_id}/build", json={}).json()
    assert wait_job(client, job["job_id"])["status"] == "done"
    return kb_id


def parse_sse(text):
    events = []
    for block in text.strip().split("\n\n"):
        lines = block.splitlines()
        assert lines[0].startswith("event: ")
        assert lines[1].startswith("data: ")
        events.append((lines[0][len("event: "):],
                       json.loads(lines[1][len("data: "):])))
    return events


# -- knowledge bases --------------------------------------------------------

def test_kb_create_shape_and_duplicate(client):
    r = client.post("/v1/kb", json={"kb_id": "kb1", "embedder_id": "m-embed"})
    assert r.status_code == 201
    assert r.json() == {"kb_id": "kb1", "chunk_size": 512,
                        "overlap_fraction": 0.15, "embedder_id": "m-embed",
                        "index_state": "empty"}
    dup = client.post("/v1/kb", json={"kb_id": "kb1"})
    assert dup.status_code == 409
    body = dup.json()
    assert body["code"] == "kb_exists"
    assert set(body) == {"code", "message", "details"}


def test_kb_upload_build_poll_and_stat(client):
    make_kb(client)
    stat = client.get("/v1/kb/kb1").json()
    assert stat["index_state"] == "ready"
    assert stat["n_documents"] == 6
    assert stat["n_chunks"] == 6
    assert (client.data_dir / "kb" / "kb1.snap").exists()
    listing = client.get("/v1/kb").json()
    assert [kb["kb_id"] for kb in listing["knowledge_bases"]] == ["kb1"]


def test_kb_snapshot_survives_restart(client, tmp_path):
    make_kb(client)
    gateway = mock_gateway()
    app2 = build_app(ServiceConfig(data_dir=client.data_dir),
                     registry=gateway.registry, gateway=gateway)
    with TestClient(app2) as c2:
        stat = c2.get("/v1/kb/kb1").json()
        assert stat["index_state"] == "ready"
        assert stat["n_chunks"] == 6


def test_kb_not_found_envelope(client):
    r = client.get("/v1/kb/ghost")
    assert r.status_code == 404
    assert r.json()["code"] == "kb_not_found"


def test_kb_missing_body_key(client):
    r = client.post("/v1/kb", json={"embedder_id": "m-embed"})
    assert r.status_code == 400
    assert r.json()["code"] == "config_error"


def test_non_object_body_is_validation_error(client):
    r = client.post("/v1/kb", json=[1, 2, 3])
    assert r.status_code == 422
    body = r.json()
    assert body["code"] == "validation_error"
    assert body["details"]["errors"]


# -- models -----------------------------------------------------------------

def test_models_crud(client):
    ids = [m["model_id"] for m in client.get("/v1/models").json()["models"]]
    assert ids == ["m-embed", "m-gen", "m-rank"]

    spec = {"model_id": "extra", "role": "embedder", "kind": "mock",
            "dim": 8, "seed": 3}
    r = client.post("/v1/models", json=spec)
    assert r.status_code == 201
    assert r.json()["model_id"] == "extra"
    assert client.post("/v1/models", json=spec).status_code == 409

    assert client.delete("/v1/models/extra").status_code == 204
    assert client.delete("/v1/models/extra").status_code == 404


def test_models_unknown_key_and_internal_error(client):
    r = client.post("/v1/models", json={"model_id": "x", "role": "embedder",
                                        "kind": "mock", "color": "blue"})
    assert r.status_code == 400
    assert r.json()["code"] == "config_error"

    # missing required constructor args surface as the 500 envelope
    r = client.post("/v1/models", json={"model_id": "x"})
    assert r.status_code == 500
    assert r.json()["code"] == "internal_error"


# -- search -----------------------------------------------------------------

def test_search_exact_and_approx(client):
    make_kb(client)
    r = client.post("/v1/search", json={"kb_id": "kb1", "query": "entry 03",
                                        "k": 3})
    assert r.status_code == 200
    hits = r.json()["hits"]
    assert [h["rank"] for h in hits] == [1, 2, 3]
    assert all(set(h) == {"chunk_id", "score", "rank", "text"} for h in hits)

    # probing every list makes the approximate backend match exact search
    approx = client.post("/v1/search", json={
        "kb_id": "kb1", "query": "entry 03", "k": 3, "backend": "approx",
        "n_probes": 6})
    assert approx.status_code == 200
    assert approx.json()["hits"] == hits


def test_search_before_build_conflicts(client):
    client.post("/v1/kb", json={"kb_id": "raw", "embedder_id": "m-embed"})
    r = client.post("/v1/search", json={"kb_id": "raw", "query": "x"})
    assert r.status_code == 409
    assert r.json()["code"] == "index_not_ready"


# -- workflow runs ----------------------------------------------------------

def run_config(kb_id="kb1", **overrides):
    cfg = {"workflow": "vanilla", "kb_id": kb_id, "generator_id": "m-gen",
           "k": 2}
    cfg.update(overrides)
    return cfg


def test_run_vanilla_and_trace_endpoint(client):
    make_kb(client)
    r = client.post("/v1/runs", json={"config": run_config(),
                                      "query": "entry 02"})
    assert r.status_code == 200
    body = r.json()
    assert body["run_id"].startswith("run-")
    assert body["final_answer"]
    kinds = [e["kind"] for e in body["trace"]["events"]]
    assert kinds == ["retrieval", "stop", "generation"]

    trace = client.get(f"/v1/runs/{body['run_id']}/trace")
    assert trace.status_code == 200
    assert trace.json() == body["trace"]

    assert client.get("/v1/runs/nope/trace").status_code == 404


def test_run_config_validation(client):
    make_kb(client)
    r = client.post("/v1/runs", json={
        "config": run_config(topk=3), "query": "q"})
    assert r.status_code == 400
    assert r.json()["code"] == "config_error"


def test_run_stream_events(client):
    make_kb(client)
    r = client.post("/v1/runs", json={
        "config": run_config(workflow="deepnote", max_iterations=2),
        "query": "entry 04", "stream": True})
    assert r.status_code == 200
    assert r.headers["content-type"].startswith("text/event-stream")
    events = parse_sse(r.text)
    names = [n for n, _ in events]
    assert names[0] == "retrieval"
    assert names[-1] == "done"
    assert "stop" in names
    assert "generation" not in names  # the answer arrives as deltas
    deltas = [d["text"] for n, d in events if n == "generation_delta"]
    done = events[-1][1]
    assert "".join(deltas) == done["final_answer"]

    trace = client.get(f"/v1/runs/{done['run_id']}/trace").json()
    assert trace["final_answer"] == done["final_answer"]
    streamed_kinds = [n for n, _ in events
                      if n in ("retrieval", "note_update", "stop")]
    persisted_kinds = [e["kind"] for e in trace["events"]
                       if e["kind"] != "generation"]
    assert streamed_kinds == persisted_kinds


def test_run_stream_error_event(client):
    r = client.post("/v1/runs", json={
        "config": run_config(kb_id="ghost"), "query": "q", "stream": True})
    assert r.status_code == 200
    events = parse_sse(r.text)
    assert len(events) == 1
    assert events[0][0] == "error"
    assert events[0][1]["code"] == "kb_not_found"


# -- synthesis --------------------------------------------------------------

def test_synth_queries_endpoint(client):
    make_kb(client)
    r = client.post("/v1/synth/queries", json={
        "kb_id": "kb1", "generator_id": "m-gen", "limit_chunks": 3})
    assert r.status_code == 200
    body = r.json()
    assert body["stats"]["generated"] == 3
    for pair in body["pairs"]:
        assert set(pair) == {"query", "source_chunk_id"}


def test_synth_negatives_endpoint(client):
    make_kb(client)
    r = client.post("/v1/synth/negatives", json={
        "kb_id": "kb1",
        "pairs": [{"query": "entry 01", "positive_chunk_id": "docs-1#0"}],
        "config": {"negative_window": [2, 4], "negatives_per_query": 2}})
    assert r.status_code == 200
    rec = r.json()["records"][0]
    assert rec["query"] == "entry 01"
    assert rec["positive_chunk_ids"] == ["docs-1#0"]
    assert "docs-1#0" not in rec["negative_chunk_ids"]


def test_synth_ddr_endpoint(client):
    make_kb(client)
    r = client.post("/v1/synth/ddr", json={
        "kb_id": "kb1", "generator_id": "m-gen",
        "qa": [{"example_id": "e1", "query": "entry 05",
                "answers": ["entry 05 text"]}]})
    assert r.status_code == 200
    body = r.json()
    assert set(body["stats"]) == {"examples", "emitted", "skipped_low_gap"}
    assert body["stats"]["examples"] == 1


def test_synth_kbalign_endpoint(client):
    make_kb(client)
    r = client.post("/v1/synth/kbalign", json={
        "kb_id": "kb1", "generator_id": "m-gen", "n_short": 2, "n_long": 1})
    assert r.status_code == 200
    examples = r.json()["examples"]
    assert len(examples) == 3
    assert {e["annotation_range"] for e in examples} == {"short", "long"}


def test_synth_bad_dataset_rows(client):
    make_kb(client)
    r = client.post("/v1/synth/ddr", json={
        "kb_id": "kb1", "generator_id": "m-gen",
        "qa": [{"example_id": "e1"}]})
    assert r.status_code == 422
    body = r.json()
    assert body["code"] == "dataset_invalid"
    assert body["details"]["issues"]
    assert body["details"]["issues"][0]["line_no"] == 1


# -- evaluation -------------------------------------------------------------

def eval_dataset():
    return [{"example_id": f"e{i}", "query": f"entry {i:02d}",
             "answers": [f"entry {i:02d}"], "gold_chunk_ids": [f"docs-{i}#0"]}
            for i in range(1, 4)]


def test_eval_retrieval_job_and_report_files(client):
    make_kb(client)
    r = client.post("/v1/eval", json={
        "kind": "retrieval", "kb_id": "kb1", "k": 3,
        "dataset": eval_dataset(), "dataset_id": "mini"})
    assert r.status_code == 202
    eval_id = r.json()["eval_id"]
    done = wait_eval(client, eval_id)
    assert done["status"] == "done"
    report = done["report"]
    assert report["kind"] == "retrieval"
    assert report["dataset_id"] == "mini"
    assert set(report["metrics"]) == {"mrr@3", "ndcg@3", "recall@3"}
    assert report["n_examples"] == 3

    out_dir = client.data_dir / "reports" / eval_id
    assert (out_dir / "report.json").exists()
    assert (out_dir / "report_rows.csv").exists()
    assert (out_dir / "report_metrics.png").exists()


def test_eval_generation_job(client):
    make_kb(client)
    r = client.post("/v1/eval", json={
        "kind": "generation", "dataset": eval_dataset(),
        "workflow_config": run_config()})
    assert r.status_code == 202
    done = wait_eval(client, r.json()["eval_id"])
    assert done["status"] == "done"
    assert set(done["report"]["metrics"]) == {"rouge_l", "exact_match",
                                              "token_f1"}


def test_eval_generation_fails_fast_on_missing_kb(client):
    r = client.post("/v1/eval", json={
        "kind": "generation", "dataset": eval_dataset(),
        "workflow_config": run_config(kb_id="ghost")})
    assert r.status_code == 404
    assert r.json()["code"] == "kb_not_found"


def test_eval_validation(client):
    make_kb(client)
    r = client.post("/v1/eval", json={"kind": "ranking", "dataset": []})
    assert r.status_code == 400

    bad = client.post("/v1/eval", json={
        "kind": "retrieval", "kb_id": "kb1",
        "dataset": [{"example_id": "e1"}]})
    assert bad.status_code == 422
    assert bad.json()["code"] == "dataset_invalid"

    assert client.get("/v1/eval/ghost").status_code == 404
    assert client.get("/v1/jobs/ghost").status_code == 404
