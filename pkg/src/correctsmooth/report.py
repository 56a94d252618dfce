"""Run reports: structured JSON records, per-node CSV, bench CSV, figures.

Every artifact carries the config hash so numbers stay traceable to the
configuration that produced them. The bench CSV is append-safe: re-running
with an identical config hash must reproduce the identical row, and a
clashing row for an existing hash is an error. Figures are rendered with
the Agg backend straight to files next to the delimited output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .pipeline import PipelineReport

_BENCH_COLUMNS = ["dataset", "base", "variant", "label_source", "mode",
                  "n_seeds", "accuracy_mean", "accuracy_std",
                  "base_accuracy_mean", "parameter_count", "alpha_correct",
                  "alpha_smooth", "s", "train_seconds", "correct_seconds",
                  "smooth_seconds", "config_hash"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def config_hash(config: dict) -> str:
    """Stable 12-hex digest of a canonicalized config mapping."""
    canon = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def hardware_string() -> str:
    return f"{platform.machine()} {platform.system()} {platform.release()}"


def run_record(report: PipelineReport, extra: dict | None = None) -> dict:
    from . import __version__

    record = {
        "dataset": report.dataset,
        "mode": report.mode,
        "config": _jsonable(report.config),
        "config_hash": config_hash(report.config),
        "n_nodes": report.n_nodes,
        "valid_accuracy": _jsonable(report.valid_accuracy),
        "test_accuracy": _jsonable(report.test_accuracy),
        "stage_seconds": _jsonable(report.stage_seconds),
        "iterations": _jsonable(report.iterations),
        "converged": _jsonable(report.converged),
        "parameter_count": report.parameter_count,
        "software_version": __version__,
        "hardware": hardware_string(),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        record.update(_jsonable(extra))
    return record


def write_run_report(path, report: PipelineReport, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(run_record(report, extra), indent=2) + "\n")
    return path


def write_pernode_csv(path, report: PipelineReport, true_labels) -> Path:
    """node_id, true label, and each stage's argmax (-1 where absent)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = report.n_nodes

    def column(arr):
        return arr if arr is not None else np.full(n, -1, dtype=np.int64)

    base = column(report.base_labels)
    corrected = column(report.corrected_labels)
    final = column(report.final_labels)
    true_labels = np.asarray(true_labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "true_label", "base_label",
                         "corrected_label", "final_label"])
        for i in range(n):
            writer.writerow([i, int(true_labels[i]), int(base[i]),
                             int(corrected[i]), int(final[i])])
    return path


def recount_accuracy(pernode_csv, index=None) -> dict:
    """Independent per-stage accuracy recount from a per-node CSV.

    Used to check that summary numbers and per-node artifacts agree.
    Rows with true label -1 are ignored; `index` restricts the recount.
    """
    rows = []
    with open(pernode_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append({k: int(v) for k, v in row.items()})
    if index is not None:
        keep = set(int(i) for i in index)
        rows = [r for r in rows if r["node_id"] in keep]
    out = {}
    for stage, col in (("base", "base_label"), ("correct", "corrected_label"),
                       ("smooth", "final_label")):
        scored = [r for r in rows if r["true_label"] >= 0 and r[col] >= 0]
        if scored:
            hits = sum(1 for r in scored if r[col] == r["true_label"])
            out[stage] = hits / len(scored)
    return out


def write_bench_csv(out_dir, rows, filename: str = "bench.csv") -> Path:
    """Append rows to the bench CSV, enforcing config-hash consistency.

    A row whose config_hash already exists must match the stored row
    exactly; a clash raises instead of silently forking history.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / filename

    def formatted(row):
        out = {}
        for col in _BENCH_COLUMNS:
            value = row.get(col)
            if value is None:
                out[col] = ""
            elif isinstance(value, float):
                out[col] = repr(value)
            else:
                out[col] = str(value)
        return out

    existing = {}
    if path.exists():
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                existing[row["config_hash"]] = row
    fresh = []
    for row in rows:
        flat = formatted(row)
        seen = existing.get(flat["config_hash"])
        if seen is None:
            fresh.append(flat)
            existing[flat["config_hash"]] = flat
        elif {k: seen.get(k, "") for k in _BENCH_COLUMNS} != flat:
            raise ValidationError(
                f"bench row for config {flat['config_hash']} differs from "
                f"the one already in {path}")
    write_header = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_BENCH_COLUMNS)
        if write_header:
            writer.writeheader()
        for flat in fresh:
            writer.writerow(flat)
    return path


def _agg_pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_stage_figure(path, report: PipelineReport) -> Path | None:
    """Bar chart of per-stage test accuracy for a single run."""
    stages = [s for s in ("base", "correct", "smooth")
              if s in report.test_accuracy
              and np.isfinite(report.test_accuracy[s])]
    if not stages:
        return None
    plt = _agg_pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(4.5, 3))
    values = [100.0 * report.test_accuracy[s] for s in stages]
    ax.bar(stages, values, color="#4878a8")
    for x, v in enumerate(values):
        ax.text(x, v + 0.3, f"{v:.2f}", ha="center", fontsize=8)
    ax.set_ylabel("test accuracy (%)")
    ax.set_title(f"{report.dataset} [{report.mode}]")
    ax.set_ylim(0, min(105.0, max(values) + 8))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_bench_figures(out_dir, rows) -> list:
    """Accuracy-by-dataset bars and a parameter-count/accuracy scatter."""
    if not rows:
        return []
    plt = _agg_pyplot()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    datasets = sorted({r["dataset"] for r in rows})
    combos = sorted({(r["base"], r["variant"]) for r in rows})
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(datasets), 3.4))
    width = 0.8 / max(1, len(combos))
    for j, combo in enumerate(combos):
        xs, ys, errs = [], [], []
        for i, name in enumerate(datasets):
            hits = [r for r in rows
                    if r["dataset"] == name and (r["base"], r["variant"]) == combo]
            if hits:
                xs.append(i + (j - (len(combos) - 1) / 2) * width)
                ys.append(100.0 * hits[0]["accuracy_mean"])
                errs.append(100.0 * hits[0]["accuracy_std"])
        ax.bar(xs, ys, width=width * 0.95, yerr=errs, capsize=2,
               label=f"{combo[0]}/{combo[1]}")
    ax.set_xticks(range(len(datasets)))
    ax.set_xticklabels(datasets, rotation=20, ha="right")
    ax.set_ylabel("test accuracy (%)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    p = out_dir / "accuracy_by_dataset.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    paths.append(p)

    scatter_rows = [r for r in rows if r.get("parameter_count")]
    if scatter_rows:
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        for r in scatter_rows:
            ax.scatter(r["parameter_count"], 100.0 * r["accuracy_mean"], s=18)
            ax.annotate(f"{r['dataset']}/{r['base']}",
                        (r["parameter_count"], 100.0 * r["accuracy_mean"]),
                        fontsize=6, xytext=(3, 3), textcoords="offset points")
        ax.set_xscale("log")
        ax.set_xlabel("parameter count")
        ax.set_ylabel("test accuracy (%)")
        fig.tight_layout()
        p = out_dir / "params_vs_accuracy.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        paths.append(p)
    return paths
