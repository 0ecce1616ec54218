import json

import pytest

from ragforge.errors import ConfigError, MalformedVerdict, NotFound
from ragforge.mocks import ScriptedGenerator
from ragforge.workflows import (
    TraceEvent,
    WorkflowConfig,
    WorkflowEngine,
    WorkflowTrace,
)

from helpers import mock_gateway


class DeepnoteScript:
    """Generator stand-in that plays a fixed verdict sequence.

    Dispatches on the template's instruction line, records review prompts,
    and hands out numbered refined queries.
    """

    def __init__(self, verdicts):
        self.verdicts = list(verdicts)
        self.review_prompts = []
        self.refines = 0

    def __call__(self, req):
        p = req.prompt
        if p.startswith("Review the note"):
            self.review_prompts.append(p)
            verdict = self.verdicts.pop(0)
            if verdict == "UPDATE":
                return f"VERDICT: UPDATE\nnote r{len(self.review_prompts)}"
            return "VERDICT: KEEP\nnothing new"
        if p.startswith("Rewrite the question"):
            self.refines += 1
            return f"refined query {self.refines}"
        if p.startswith("Answer the question using the accumulated note."):
            return "answer from note"
        raise AssertionError(f"unexpected prompt: {p[:60]}")


def engine_for(kb, script=None, trace_dir=None):
    gateway = mock_gateway()
    if script is not None:
        gateway.bind_mock("m-gen", ScriptedGenerator(script))
    return WorkflowEngine({kb.kb_id: kb}.__getitem__, gateway,
                          trace_dir=trace_dir)


def cfg_for(kb, workflow="vanilla", **overrides):
    base = dict(workflow=workflow, kb_id=kb.kb_id, generator_id="m-gen", k=3)
    base.update(overrides)
    return WorkflowConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        WorkflowConfig(workflow="agentic", kb_id="kb", generator_id="g")
    with pytest.raises(ConfigError):
        WorkflowConfig(workflow="vanilla", kb_id="", generator_id="g")
    with pytest.raises(ConfigError):
        WorkflowConfig(workflow="vanilla", kb_id="kb", generator_id="")
    with pytest.raises(ConfigError):
        WorkflowConfig(workflow="vanilla", kb_id="kb", generator_id="g", k=0)
    with pytest.raises(ConfigError):
        WorkflowConfig(workflow="deepnote", kb_id="kb", generator_id="g",
                       max_iterations=0)


def test_config_from_obj_and_template_override():
    cfg = WorkflowConfig.from_obj({
        "workflow": "deepnote", "kb_id": "kb", "generator_id": "g",
        "prompt_template_ids": {"rag_answer": "rag_answer@v2"}})
    assert cfg.template_id("rag_answer") == "rag_answer@v2"
    assert cfg.template_id("deepnote_review") == "deepnote_review@v1"
    with pytest.raises(ConfigError):
        WorkflowConfig.from_obj({"workflow": "vanilla", "kb_id": "kb",
                                 "generator_id": "g", "topk": 3})


def test_vanilla_trace_shape(synth50):
    kb, _ = synth50
    engine = engine_for(kb, lambda req: "plain answer")
    answer, trace = engine.run(cfg_for(kb), "passage 07", run_id="r-van")
    assert answer == "plain answer"
    assert trace.run_id == "r-van"
    assert trace.workflow == "vanilla"
    assert [e.kind for e in trace.events] == ["retrieval", "stop", "generation"]

    retrieval = trace.events[0].payload
    assert retrieval["query"] == "passage 07"
    assert len(retrieval["hits"]) == 3
    for rank, hit in enumerate(retrieval["hits"], start=1):
        assert hit["rank"] == rank
        assert set(hit) == {"chunk_id", "score", "rank", "snippet"}
        assert hit["snippet"]

    assert trace.events[1].payload == {"reason": "single_pass", "iterations": 1}
    generation = trace.events[2].payload
    assert generation["text"] == "plain answer"
    assert generation["prompt_template_id"] == "rag_answer@v1"


def test_vanilla_auto_run_id(synth50):
    kb, _ = synth50
    engine = engine_for(kb, lambda req: "a")
    _, trace = engine.run(cfg_for(kb), "q")
    assert trace.run_id.startswith("run-")
    assert len(trace.run_id) == len("run-") + 12


def test_deepnote_update_then_keep(synth50):
    kb, _ = synth50
    script = DeepnoteScript(["UPDATE", "KEEP"])
    engine = engine_for(kb, script)
    cfg = cfg_for(kb, workflow="deepnote", max_iterations=3)
    answer, trace = engine.run(cfg, "passage 03")

    kinds = [e.kind for e in trace.events]
    assert kinds == ["retrieval", "note_update", "retrieval", "note_update",
                     "stop", "generation"]
    assert answer == "answer from note"

    first_note = trace.events[1].payload
    assert first_note == {"old_revision": 0, "new_revision": 1,
                          "accepted": True, "note": "note r1"}
    # second retrieval runs the refined query
    assert trace.events[2].payload["query"] == "refined query 1"
    second_note = trace.events[3].payload
    assert second_note == {"old_revision": 1, "new_revision": 1,
                           "accepted": False, "note": "note r1"}
    assert trace.events[4].payload == {"reason": "no_new_info", "iterations": 2}
    assert trace.events[5].payload["prompt_template_id"] == "deepnote_answer@v1"

    # the reviewer always sees the original question, not the refined one
    assert all("passage 03" in p for p in script.review_prompts)
    assert "refined query 1" not in script.review_prompts[1].split("Question:")[1]


def test_deepnote_hits_iteration_cap(synth50):
    kb, _ = synth50
    script = DeepnoteScript(["UPDATE", "UPDATE", "UPDATE"])
    engine = engine_for(kb, script)
    cfg = cfg_for(kb, workflow="deepnote", max_iterations=3)
    _, trace = engine.run(cfg, "passage 05")

    kinds = [e.kind for e in trace.events]
    assert kinds == ["retrieval", "note_update"] * 3 + ["stop", "generation"]
    revisions = [e.payload["new_revision"] for e in trace.events
                 if e.kind == "note_update"]
    assert revisions == [1, 2, 3]
    assert trace.events[-2].payload == {"reason": "max_iterations",
                                        "iterations": 3}
    # no refinement after the final iteration
    assert script.refines == 2


def test_deepnote_malformed_verdict(synth50):
    kb, _ = synth50
    engine = engine_for(kb, lambda req: "no verdict anywhere"
                        if req.prompt.startswith("Review") else "x")
    cfg = cfg_for(kb, workflow="deepnote")
    with pytest.raises(MalformedVerdict) as info:
        engine.run(cfg, "q")
    assert info.value.iteration == 1
    assert "no verdict anywhere" in info.value.output


def test_stream_matches_persisted_trace(synth50, tmp_path):
    kb, _ = synth50
    engine = engine_for(kb, DeepnoteScript(["UPDATE", "KEEP"]),
                        trace_dir=tmp_path)
    cfg = cfg_for(kb, workflow="deepnote", max_iterations=3)
    streamed = list(engine.stream(cfg, "passage 03", run_id="r-stream"))

    trace = WorkflowTrace.load(tmp_path, "r-stream")
    persisted = [(e.kind, e.payload) for e in trace.events
                 if e.kind != "generation"]
    assert streamed[:len(persisted)] == persisted

    tail = streamed[len(persisted):]
    assert tail[-1] == ("done", {"run_id": "r-stream",
                                 "final_answer": trace.final_answer})
    deltas = tail[:-1]
    assert all(name == "generation_delta" for name, _ in deltas)
    assert "".join(p["text"] for _, p in deltas) == trace.final_answer


def test_stream_error_event_and_no_trace(tmp_path):
    def lookup(kb_id):
        raise NotFound(f"no knowledge base {kb_id!r}")

    engine = WorkflowEngine(lookup, mock_gateway(), trace_dir=tmp_path)
    cfg = WorkflowConfig(workflow="vanilla", kb_id="ghost", generator_id="m-gen")
    events = list(engine.stream(cfg, "q"))
    assert len(events) == 1
    name, payload = events[0]
    assert name == "error"
    assert payload["code"] == "not_found"
    assert "ghost" in payload["message"]
    assert list(tmp_path.iterdir()) == []


def test_run_persists_when_trace_dir_set(synth50, tmp_path):
    kb, _ = synth50
    engine = engine_for(kb, lambda req: "persisted", trace_dir=tmp_path)
    _, trace = engine.run(cfg_for(kb), "q", run_id="r-disk")
    path = tmp_path / "r-disk.jsonl"
    assert path.exists()
    lines = path.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    assert header == {"run_id": "r-disk", "workflow": "vanilla", "query": "q",
                      "final_answer": "persisted"}
    assert len(lines) == 1 + len(trace.events)


def test_trace_save_load_round_trip(tmp_path):
    trace = WorkflowTrace(
        run_id="r-rt", workflow="deepnote", query="why",
        events=[
            TraceEvent("retrieval", {"query": "why", "hits": []}),
            TraceEvent("stop", {"reason": "no_new_info", "iterations": 1}),
            TraceEvent("generation", {"prompt_template_id": "x@v1",
                                      "text": "ans"}),
        ],
        final_answer="ans")
    trace.save(tmp_path)
    loaded = WorkflowTrace.load(tmp_path, "r-rt")
    assert loaded == trace
    assert loaded.to_dict() == trace.to_dict()

    with pytest.raises(NotFound):
        WorkflowTrace.load(tmp_path, "missing")


def test_demo_generator_runs_both_workflows(toy):
    """The bundled demo generator drives both workflows without scripting."""
    kb, gateway = toy
    engine = WorkflowEngine({"toy": kb}.__getitem__, gateway)
    for workflow in ("vanilla", "deepnote"):
        cfg = WorkflowConfig(workflow=workflow, kb_id="toy",
                             generator_id="toy-generator", k=3)
        answer, trace = engine.run(cfg, "how do tides work")
        assert answer == trace.final_answer
        assert answer.strip()
        assert trace.events[-1].kind == "generation"
        assert trace.events[-2].kind == "stop"
