"""Evaluation report rendering.

One report becomes three kinds of file next to each other:

    report.json        the full report document
    <stem>_rows.csv    per-example rows, one metric per column
    <stem>_*.png       summary figures (aggregate bars, score histograms)

Figure content is deterministic; PNG bytes are not guaranteed stable across
matplotlib versions, so only the JSON and CSV are golden-tested.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import IoFailure
from .evaluate import EvalReport

PLOT_STYLE = {
    "figure.figsize": (7.0, 4.2),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

BAR_COLOR = "#4878a8"
HIST_COLOR = "#6aa84f"


def write_report_json(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(
            json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc}") from exc
    return path


def write_rows_csv(report: EvalReport, path: str | Path) -> Path:
    """Columns: example_id, one column per metric, then error."""
    path = Path(path)
    metric_keys = list(report.metrics)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["example_id", *metric_keys, "error"])
        for row in report.rows:
            writer.writerow([row["example_id"],
                             *[row.get(k, "") for k in metric_keys],
                             row.get("error", "")])
    return path


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_figures(report: EvalReport, out_dir: str | Path, stem: str) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    metric_keys = list(report.metrics)
    if not metric_keys:
        return paths
    with plt.rc_context(PLOT_STYLE):
        fig, ax = plt.subplots()
        ax.bar(range(len(metric_keys)),
               [report.metrics[k] for k in metric_keys],
               color=BAR_COLOR, width=0.6)
        ax.set_xticks(range(len(metric_keys)))
        ax.set_xticklabels(metric_keys)
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel("mean score")
        ax.set_title(f"{report.kind} aggregates ({report.n_scored} scored, "
                     f"{report.failures} failed)")
        bars_path = out_dir / f"{stem}_metrics.png"
        _save(fig, bars_path)
        paths.append(bars_path)

        scored = [r for r in report.rows if "error" not in r]
        if scored:
            fig, axes = plt.subplots(1, len(metric_keys), sharey=True)
            if len(metric_keys) == 1:
                axes = [axes]
            for ax, key in zip(axes, metric_keys):
                ax.hist([r[key] for r in scored], bins=10, range=(0.0, 1.0),
                        color=HIST_COLOR)
                ax.set_xlabel(key)
            axes[0].set_ylabel("examples")
            fig.suptitle("per-example score distribution")
            hist_path = out_dir / f"{stem}_distribution.png"
            _save(fig, hist_path)
            paths.append(hist_path)
    return paths


def write_report_files(report: EvalReport, json_path: str | Path) -> dict:
    """Writes the JSON report at json_path and the CSV and figures beside it."""
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    stem = json_path.stem
    out = {
        "report": write_report_json(report, json_path),
        "rows": write_rows_csv(report, json_path.with_name(f"{stem}_rows.csv")),
        "figures": render_figures(report, json_path.parent, stem),
    }
    return out
