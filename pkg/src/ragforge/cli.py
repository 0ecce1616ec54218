"""Command line interface.

    ragforge kb ingest|build|stat      manage a local knowledge base
    ragforge search                    top-k search against a built KB
    ragforge run                       execute a workflow, optionally streamed
    ragforge synth queries|negatives|ddr|kbalign|export
    ragforge eval retrieval|generation
    ragforge serve                     start the HTTP service

All state lives under the data directory (--data-dir or RAGFORGE_DATA_DIR):
staged documents as kb/<id>.docs.jsonl, built snapshots as kb/<id>.snap, run
traces under runs/, reports under reports/.  Exit codes: 0 success, 1 usage
error, 2 runtime error.
"""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .chunking import ChunkingConfig
from .config import load_config
from .errors import ConfigError, RagforgeError
from .evaluate import evaluate_generation, evaluate_retrieval
from .gateway import ModelGateway, ModelRegistry
from .knowledge import KnowledgeBase, read_documents
from .records import Document, read_dataset, write_dataset
from .report_plots import write_report_files
from .retrieval import build_approx_index, search
from .synth import (
    SynthesisConfig,
    build_ddr_preferences,
    build_kbalign_sft,
    export_training_files,
    mine_hard_negatives,
    synthesize_queries,
)
from .workflows import WorkflowConfig, WorkflowEngine


def _stage_path(data_dir: Path, kb_id: str) -> Path:
    return data_dir / "kb" / f"{kb_id}.docs.jsonl"


def _snap_path(data_dir: Path, kb_id: str) -> Path:
    return data_dir / "kb" / f"{kb_id}.snap"


def _read_staged(path: Path) -> list[Document]:
    docs = []
    for line in path.read_text(encoding="utf-8").splitlines():
        obj = json.loads(line)
        docs.append(Document(**obj))
    return docs


def _append_staged(path: Path, docs: list[Document]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8", newline="\n") as f:
        for d in docs:
            f.write(json.dumps({
                "doc_id": d.doc_id, "source_path": d.source_path,
                "format": d.format, "text": d.text, "metadata": d.metadata,
            }, ensure_ascii=False) + "\n")


def _gateway(models_path: Path | None, data_dir: Path) -> ModelGateway:
    path = models_path or data_dir / "models.toml"
    if not path.exists():
        raise ConfigError(f"no model registry at {path}; pass --models")
    return ModelGateway(ModelRegistry.from_toml(path))


def _built_kb(data_dir: Path, kb_id: str) -> KnowledgeBase:
    snap = _snap_path(data_dir, kb_id)
    if not snap.exists():
        raise ConfigError(f"knowledge base {kb_id!r} is not built; run kb build")
    return KnowledgeBase.load_snapshot(snap)


def _synth_config(path: Path | None) -> SynthesisConfig:
    if path is None:
        return SynthesisConfig()
    with path.open("rb") as f:
        data = tomllib.load(f)
    return SynthesisConfig.from_obj(data.get("synthesis", data))


_path_arg = dict(type=click.Path(path_type=Path))


@click.group()
@click.option("--data-dir", envvar="RAGFORGE_DATA_DIR",
              default="./ragforge-data", show_default=True, **_path_arg)
@click.pass_context
def cli(ctx, data_dir: Path):
    """Modular retrieval-augmented generation toolkit."""
    ctx.obj = data_dir


@cli.group()
def kb():
    """Knowledge base management."""


@kb.command("ingest")
@click.option("--kb", "kb_id", required=True)
@click.option("--path", "src", required=True, **_path_arg)
@click.option("--format", "fmt", default="txt", show_default=True,
              type=click.Choice(["txt", "markdown", "jsonl", "csv"]))
@click.option("--text-column", default=None)
@click.pass_obj
def kb_ingest(data_dir: Path, kb_id: str, src: Path, fmt: str, text_column):
    docs = read_documents(src, fmt, text_column)
    stage = _stage_path(data_dir, kb_id)
    staged_ids = {d.doc_id for d in _read_staged(stage)} if stage.exists() else set()
    clash = staged_ids & {d.doc_id for d in docs}
    if clash:
        raise ConfigError(f"doc ids already staged: {sorted(clash)}")
    _append_staged(stage, docs)
    click.echo(f"staged {len(docs)} document(s) for {kb_id}")


@kb.command("build")
@click.option("--kb", "kb_id", required=True)
@click.option("--embedder", "embedder_id", required=True)
@click.option("--chunk-size", default=512, show_default=True)
@click.option("--overlap", default=0.15, show_default=True)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def kb_build(data_dir: Path, kb_id: str, embedder_id: str, chunk_size: int,
             overlap: float, models_path):
    stage = _stage_path(data_dir, kb_id)
    if not stage.exists():
        raise ConfigError(f"nothing staged for {kb_id!r}; run kb ingest first")
    gateway = _gateway(models_path, data_dir)
    base = KnowledgeBase(kb_id, ChunkingConfig(chunk_size, overlap), embedder_id)
    base.add_documents(_read_staged(stage))
    summary = base.build_index(gateway)
    snap = _snap_path(data_dir, kb_id)
    snap.parent.mkdir(parents=True, exist_ok=True)
    base.save_snapshot(snap)
    click.echo(json.dumps(summary))


@kb.command("stat")
@click.option("--kb", "kb_id", required=True)
@click.pass_obj
def kb_stat(data_dir: Path, kb_id: str):
    snap = _snap_path(data_dir, kb_id)
    if snap.exists():
        click.echo(json.dumps(KnowledgeBase.load_snapshot(snap).stat()))
        return
    stage = _stage_path(data_dir, kb_id)
    if not stage.exists():
        raise ConfigError(f"unknown knowledge base {kb_id!r}")
    docs = _read_staged(stage)
    click.echo(json.dumps({"kb_id": kb_id, "n_documents": len(docs),
                           "n_chunks": 0, "index_state": "empty"}))


@cli.command("search")
@click.option("--kb", "kb_id", required=True)
@click.option("--query", required=True)
@click.option("-k", "k", default=5, show_default=True)
@click.option("--approx", is_flag=True)
@click.option("--n-probes", default=None, type=int)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def search_cmd(data_dir: Path, kb_id: str, query: str, k: int, approx: bool,
               n_probes, models_path):
    """Top-k search; prints one JSON hit per line."""
    base = _built_kb(data_dir, kb_id)
    gateway = _gateway(models_path, data_dir)
    approx_index = build_approx_index(base) if approx else None
    hits = search(base, gateway, query, k,
                  backend="approx" if approx else "exact",
                  approx_index=approx_index, n_probes=n_probes)
    for h in hits:
        click.echo(json.dumps({"chunk_id": h.chunk_id, "score": h.score,
                               "rank": h.rank}))


@cli.command("run")
@click.option("--workflow", required=True, type=click.Choice(["vanilla", "deepnote"]))
@click.option("--kb", "kb_id", required=True)
@click.option("--query", required=True)
@click.option("--generator", "generator_id", required=True)
@click.option("-k", "k", default=5, show_default=True)
@click.option("--max-iterations", default=3, show_default=True)
@click.option("--stream", is_flag=True)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def run_cmd(data_dir: Path, workflow: str, kb_id: str, query: str,
            generator_id: str, k: int, max_iterations: int, stream: bool,
            models_path):
    """Execute one workflow run against a built knowledge base."""
    base = _built_kb(data_dir, kb_id)
    gateway = _gateway(models_path, data_dir)
    runs_dir = data_dir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    engine = WorkflowEngine(lambda _: base, gateway, trace_dir=runs_dir)
    cfg = WorkflowConfig(workflow=workflow, kb_id=kb_id,
                         generator_id=generator_id, k=k,
                         max_iterations=max_iterations)
    if stream:
        for name, payload in engine.stream(cfg, query):
            click.echo(f"{name}\t{json.dumps(payload, ensure_ascii=False)}")
        return
    answer, trace = engine.run(cfg, query)
    click.echo(answer)
    click.echo(f"run_id: {trace.run_id}", err=True)


@cli.group()
def synth():
    """Training-data construction."""


@synth.command("queries")
@click.option("--kb", "kb_id", required=True)
@click.option("--generator", "generator_id", required=True)
@click.option("--config", "config_path", default=None, **_path_arg)
@click.option("--limit-chunks", default=None, type=int)
@click.option("--out", "out_path", required=True, **_path_arg)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def synth_queries_cmd(data_dir, kb_id, generator_id, config_path, limit_chunks,
                      out_path, models_path):
    base = _built_kb(data_dir, kb_id)
    gateway = _gateway(models_path, data_dir)
    cfg = _synth_config(config_path)
    pairs, stats = synthesize_queries(base, gateway, generator_id, cfg,
                                      limit_chunks=limit_chunks)
    with Path(out_path).open("w", encoding="utf-8", newline="\n") as f:
        for query, cid in pairs:
            f.write(json.dumps({"query": query, "positive_chunk_id": cid},
                               ensure_ascii=False) + "\n")
    click.echo(json.dumps(stats), err=True)


@synth.command("negatives")
@click.option("--kb", "kb_id", required=True)
@click.option("--pairs", "pairs_path", required=True, **_path_arg)
@click.option("--config", "config_path", default=None, **_path_arg)
@click.option("--out", "out_path", required=True, **_path_arg)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def synth_negatives_cmd(data_dir, kb_id, pairs_path, config_path, out_path,
                        models_path):
    """Mine hard negatives for (query, positive) pairs produced by
    `synth queries`."""
    base = _built_kb(data_dir, kb_id)
    gateway = _gateway(models_path, data_dir)
    cfg = _synth_config(config_path)
    pairs = []
    for line in Path(pairs_path).read_text(encoding="utf-8").splitlines():
        obj = json.loads(line)
        pairs.append((obj["query"], obj["positive_chunk_id"]))
    records = mine_hard_negatives(base, gateway, pairs, cfg)
    count = write_dataset(records, out_path)
    click.echo(f"wrote {count} retrieval pair(s) to {out_path}", err=True)


@synth.command("ddr")
@click.option("--kb", "kb_id", required=True)
@click.option("--generator", "generator_id", required=True)
@click.option("--qa", "qa_path", required=True, **_path_arg)
@click.option("--config", "config_path", default=None, **_path_arg)
@click.option("--out", "out_path", required=True, **_path_arg)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def synth_ddr_cmd(data_dir, kb_id, generator_id, qa_path, config_path,
                  out_path, models_path):
    base = _built_kb(data_dir, kb_id)
    gateway = _gateway(models_path, data_dir)
    cfg = _synth_config(config_path)
    qa = read_dataset(qa_path, "qa")
    pairs, stats = build_ddr_preferences(base, gateway, qa, generator_id, cfg)
    write_dataset(pairs, out_path)
    click.echo(json.dumps(stats), err=True)


@synth.command("kbalign")
@click.option("--kb", "kb_id", required=True)
@click.option("--generator", "generator_id", required=True)
@click.option("--n-short", default=0, show_default=True)
@click.option("--n-long", default=0, show_default=True)
@click.option("--config", "config_path", default=None, **_path_arg)
@click.option("--out", "out_path", required=True, **_path_arg)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def synth_kbalign_cmd(data_dir, kb_id, generator_id, n_short, n_long,
                      config_path, out_path, models_path):
    base = _built_kb(data_dir, kb_id)
    gateway = _gateway(models_path, data_dir)
    cfg = _synth_config(config_path)
    examples = build_kbalign_sft(base, gateway, generator_id, cfg,
                                 n_short=n_short, n_long=n_long)
    count = write_dataset(examples, out_path)
    click.echo(f"wrote {count} annotation(s) to {out_path}", err=True)


@synth.command("export")
@click.option("--in", "in_path", required=True, **_path_arg)
@click.option("--kind", required=True,
              type=click.Choice(["preference", "sft", "retrieval_pair"]))
@click.option("--format", "fmt", required=True,
              type=click.Choice(["dpo_jsonl", "sft_jsonl", "retrieval_jsonl"]))
@click.option("--out", "out_path", required=True, **_path_arg)
@click.option("--kb", "kb_id", default=None)
@click.pass_obj
def synth_export_cmd(data_dir, in_path, kind, fmt, out_path, kb_id):
    """Convert a unified dataset into a trainer-facing file."""
    records = read_dataset(in_path, kind)
    base = _built_kb(data_dir, kb_id) if kb_id else None
    count = export_training_files(records, fmt, out_path, kb=base)
    click.echo(f"wrote {count} line(s) to {out_path}", err=True)


@cli.group("eval")
def eval_group():
    """Batch evaluation with report files."""


@eval_group.command("retrieval")
@click.option("--kb", "kb_id", required=True)
@click.option("--dataset", "dataset_path", required=True, **_path_arg)
@click.option("-k", "k", default=10, show_default=True)
@click.option("--out", "out_path", required=True, **_path_arg)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def eval_retrieval_cmd(data_dir, kb_id, dataset_path, k, out_path, models_path):
    base = _built_kb(data_dir, kb_id)
    gateway = _gateway(models_path, data_dir)
    dataset = read_dataset(dataset_path, "qa")
    report = evaluate_retrieval(base, gateway, dataset, k=k,
                                dataset_id=str(dataset_path))
    paths = write_report_files(report, out_path)
    for key, value in report.metrics.items():
        click.echo(f"{key} {value:.4f}")
    click.echo(f"report: {paths['report']}", err=True)


@eval_group.command("generation")
@click.option("--workflow", required=True, type=click.Choice(["vanilla", "deepnote"]))
@click.option("--kb", "kb_id", required=True)
@click.option("--generator", "generator_id", required=True)
@click.option("--dataset", "dataset_path", required=True, **_path_arg)
@click.option("-k", "k", default=5, show_default=True)
@click.option("--max-iterations", default=3, show_default=True)
@click.option("--out", "out_path", required=True, **_path_arg)
@click.option("--models", "models_path", default=None, **_path_arg)
@click.pass_obj
def eval_generation_cmd(data_dir, workflow, kb_id, generator_id, dataset_path,
                        k, max_iterations, out_path, models_path):
    base = _built_kb(data_dir, kb_id)
    gateway = _gateway(models_path, data_dir)
    dataset = read_dataset(dataset_path, "qa")
    engine = WorkflowEngine(lambda _: base, gateway)
    cfg = WorkflowConfig(workflow=workflow, kb_id=kb_id,
                         generator_id=generator_id, k=k,
                         max_iterations=max_iterations)
    report = evaluate_generation(engine, cfg, dataset,
                                 dataset_id=str(dataset_path))
    paths = write_report_files(report, out_path)
    for key, value in report.metrics.items():
        click.echo(f"{key} {value:.4f}")
    click.echo(f"report: {paths['report']}", err=True)


@cli.command("serve")
@click.option("--config", "config_path", default=None, **_path_arg)
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.pass_obj
def serve_cmd(data_dir: Path, config_path, host, port):
    """Start the HTTP service; --port 0 picks a free port and prints it."""
    import uvicorn

    from .server import build_app

    service = load_config(config_path, data_dir=data_dir)
    host = host if host is not None else service.host
    port = port if port is not None else service.port
    app = build_app(service)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    click.echo(f"listening on {host}:{sock.getsockname()[1]}", nl=True)
    sys.stdout.flush()
    uvicorn.Server(uvicorn.Config(app, log_level="warning")).run(sockets=[sock])


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except RagforgeError as exc:
        click.echo(f"error [{exc.code}]: {exc.message}", err=True)
        return 2
    except Exception as exc:  # runtime failures outside the error hierarchy
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
