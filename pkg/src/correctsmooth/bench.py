"""Benchmark harness: dataset defaults, base production, tuning, tables.

Reproduces the accuracy tables: for each (dataset, base model, correction
variant, label source) cell it draws several split seeds, trains the base
predictor per seed, tunes propagation hyperparameters on the first seed's
validation set, and reports mean/std test accuracy with per-stage timing.

Base model kinds:

    plain_linear   linear softmax on raw features only
    linear         linear softmax on raw features + spectral embedding
    mlp            MLP on raw features + spectral embedding
    none           no base predictor (propagation-only modes)

Datasets without raw features fall back to the spectral embedding alone.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from statistics import median

import numpy as np

from .data import UNKNOWN_LABEL, Dataset, Split, make_split
from .errors import ValidationError
from .models import TrainConfig, count_parameters, predict_proba, train
from .pipeline import (CorrectionConfig, PipelineConfig, SmoothConfig,
                       pipeline_operators, run_pipeline)
from .spectral import augment_features, get_embedding

BASE_KINDS = ("plain_linear", "linear", "mlp", "none")
DEFAULT_ALPHA_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
DEFAULT_S_GRID = (0.5, 0.75, 1.0, 1.5, 2.0)
THREADS_ENV = "CS_NUM_THREADS"


@dataclass(frozen=True)
class DatasetDefaults:
    fractions: tuple | None  # None: the benchmark ships a fixed split file
    mlp_layers: int = 3
    mlp_hidden: int = 64
    lr: float = 0.01


DATASET_DEFAULTS = {
    "cora": DatasetDefaults((0.6, 0.2, 0.2)),
    "citeseer": DatasetDefaults((0.6, 0.2, 0.2)),
    "pubmed": DatasetDefaults((0.6, 0.2, 0.2)),
    "email": DatasetDefaults((0.4, 0.1, 0.5)),
    "us-county": DatasetDefaults((0.4, 0.1, 0.5), mlp_layers=5, mlp_hidden=256, lr=0.005),
    "rice31": DatasetDefaults((0.4, 0.1, 0.5), mlp_layers=5, mlp_hidden=256, lr=0.005),
    "wikics": DatasetDefaults(None, mlp_layers=3, mlp_hidden=256, lr=0.005),
    "arxiv": DatasetDefaults(None, mlp_layers=3, mlp_hidden=256, lr=0.01),
    "products": DatasetDefaults(None, mlp_layers=3, mlp_hidden=256, lr=0.01),
}


def dataset_defaults(name: str) -> DatasetDefaults:
    return DATASET_DEFAULTS.get(name.lower().replace("_", "-"),
                                DatasetDefaults((0.6, 0.2, 0.2)))


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"{THREADS_ENV}={env!r} is not an integer")
    return 1


@dataclass(frozen=True)
class BaseConfig:
    """How to build the base prediction matrix for one dataset."""

    kind: str = "plain_linear"
    spectral_k: int = 128
    spectral_tau: float | None = None
    spectral_seed: int = 0
    epochs: int = 300
    lr: float | None = None      # None: take the per-dataset default
    layers: int | None = None
    hidden: int | None = None
    dropout: float = 0.5
    weight_decay: float = 0.0
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise ValidationError(f"unknown base kind {self.kind!r}")


def feature_mode(ds: Dataset, kind: str) -> str:
    if ds.features is None:
        return "spectral_only"
    return "raw_only" if kind == "plain_linear" else "concat"


def prepare_features(ds: Dataset, cfg: BaseConfig, cache_dir=None) -> np.ndarray:
    """Assemble (and standardize) the input matrix the base model sees."""
    mode = feature_mode(ds, cfg.kind)
    emb = None
    if mode != "raw_only":
        emb = get_embedding(ds.graph, k=min(cfg.spectral_k, ds.n - 1),
                            tau=cfg.spectral_tau, seed=cfg.spectral_seed,
                            cache_dir=cache_dir)
    return augment_features(ds.features, emb, mode, standardize=cfg.standardize)


def resolve_train_config(ds_name: str, cfg: BaseConfig) -> TrainConfig:
    d = dataset_defaults(ds_name)
    kind = "mlp" if cfg.kind == "mlp" else "linear"
    return TrainConfig(model_kind=kind,
                       layers=cfg.layers if cfg.layers is not None else d.mlp_layers,
                       hidden=cfg.hidden if cfg.hidden is not None else d.mlp_hidden,
                       lr=cfg.lr if cfg.lr is not None else d.lr,
                       dropout=cfg.dropout if kind == "mlp" else 0.0,
                       epochs=cfg.epochs, seed=cfg.seed,
                       weight_decay=cfg.weight_decay)


def base_predictions(ds: Dataset, split: Split, cfg: BaseConfig,
                     cache_dir=None, features: np.ndarray | None = None):
    """Train the base predictor; returns (Z, model, features used)."""
    if cfg.kind == "none":
        return None, None, None
    X = features if features is not None else prepare_features(ds, cfg, cache_dir)
    tcfg = resolve_train_config(ds.name, cfg)
    model = train(X, ds.labels, split, tcfg, n_classes=ds.n_classes)
    return predict_proba(model, X), model, X


def _mask_test_labels(ds: Dataset, split: Split) -> Dataset:
    hidden = ds.labels.copy()
    hidden[split.test] = UNKNOWN_LABEL
    return Dataset(name=ds.name, graph=ds.graph, features=ds.features,
                   labels=hidden, n_classes=ds.n_classes)


def grid_search(ds: Dataset, split: Split, Z: np.ndarray | None,
                variant: str = "autoscale", mode: str = "full",
                label_source: str = "train_only",
                alpha_correct_grid=DEFAULT_ALPHA_GRID,
                alpha_smooth_grid=DEFAULT_ALPHA_GRID,
                s_grid=(1.0,), max_iters: int = 100, tol: float = 1e-6,
                operators: dict | None = None):
    """Exhaustive validation-accuracy search over propagation knobs.

    Test labels are masked out before any pipeline call, so the search
    can only ever read train/validation labels. Ties break toward the
    smaller (alpha_correct, alpha_smooth, s) triple; grids are iterated
    in ascending order so the first maximum wins.

    Returns (best PipelineConfig, best validation accuracy, trace) where
    trace lists every evaluated combination with its validation score.
    """
    masked = _mask_test_labels(ds, split)
    if operators is None:
        operators = pipeline_operators(ds.graph, variant)
    has_correct = mode in ("full", "correct_only") and variant != "none"
    uses_smooth = mode != "correct_only"
    ac_grid = tuple(sorted(alpha_correct_grid)) if has_correct else (0.9,)
    s_values = tuple(sorted(s_grid)) if (has_correct and variant == "fdiff_scale") else (1.0,)
    as_grid = tuple(sorted(alpha_smooth_grid)) if uses_smooth else (0.8,)

    best = None
    trace = []
    for ac in ac_grid:
        for s in s_values:
            for asm in as_grid:
                cfg = PipelineConfig(
                    correction=CorrectionConfig(variant=variant if has_correct else "none",
                                                alpha_correct=ac, s=s),
                    smoothing=SmoothConfig(alpha_smooth=asm, label_source=label_source),
                    max_iters=max_iters, tol=tol)
                rep = run_pipeline(masked, split, cfg, mode=mode, Z=Z,
                                   operators=operators)
                stage = "smooth" if uses_smooth else "correct"
                acc = rep.valid_accuracy[stage]
                trace.append({"alpha_correct": ac, "alpha_smooth": asm, "s": s,
                              "valid_accuracy": acc})
                if best is None or acc > best[0]:
                    best = (acc, cfg)
    return best[1], best[0], trace


@dataclass
class RunManifest:
    """Provenance record for one benchmark row."""

    dataset: str
    config_hash: str
    software_version: str
    base_kind: str
    variant: str
    label_source: str
    mode: str
    seeds: list
    accuracy_mean: float
    accuracy_std: float
    base_accuracy_mean: float | None
    stage_seconds: dict
    iterations: dict
    parameter_count: int | None
    tuned: dict


def _std(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def bench_cell(ds: Dataset, base_kind: str, variant: str, label_source: str,
               mode: str, seeds, fractions=None, fixed_split: Split | None = None,
               base_cfg: BaseConfig | None = None, tune: bool = True,
               s_grid=DEFAULT_S_GRID, cache_dir=None, max_iters: int = 100,
               tol: float = 1e-6, n_workers: int | None = None) -> dict:
    """One table row: several split seeds through the whole pipeline.

    With a fixed split the seeds only reseed base-model training.
    Hyperparameters are tuned once on the first seed's validation set and
    reused for the remaining seeds.
    """
    from . import __version__
    from .report import config_hash

    if fractions is None and fixed_split is None:
        d = dataset_defaults(ds.name)
        if d.fractions is None:
            raise ValidationError(
                f"dataset {ds.name} expects a fixed split file; none given")
        fractions = d.fractions
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("bench_cell needs at least one seed")
    base_cfg = base_cfg or BaseConfig(kind=base_kind)
    if base_cfg.kind != base_kind:
        base_cfg = replace(base_cfg, kind=base_kind)

    operators = pipeline_operators(ds.graph, variant)
    shared_features = None
    if base_kind != "none":
        shared_features = prepare_features(ds, base_cfg, cache_dir)

    def split_for(seed):
        if fixed_split is not None:
            return fixed_split
        return make_split(ds.n, fractions, seed)

    def base_for(seed, split):
        if base_kind == "none":
            return None, None, 0.0
        t0 = time.perf_counter()
        Z, model, _ = base_predictions(ds, split, replace(base_cfg, seed=seed),
                                       features=shared_features)
        return Z, model, time.perf_counter() - t0

    first_split = split_for(seeds[0])
    Z0, model0, train_s0 = base_for(seeds[0], first_split)

    if tune:
        effective_s_grid = s_grid if variant == "fdiff_scale" else (1.0,)
        cfg, tuned_val, _ = grid_search(ds, first_split, Z0, variant=variant,
                                        mode=mode, label_source=label_source,
                                        s_grid=effective_s_grid,
                                        max_iters=max_iters, tol=tol,
                                        operators=operators)
    else:
        cfg = PipelineConfig(correction=CorrectionConfig(variant=variant),
                             smoothing=SmoothConfig(label_source=label_source),
                             max_iters=max_iters, tol=tol)
        tuned_val = float("nan")

    def run_seed(seed):
        if seed == seeds[0]:
            split, Z, model, train_s = first_split, Z0, model0, train_s0
        else:
            split = split_for(seed)
            Z, model, train_s = base_for(seed, split)
        rep = run_pipeline(ds, split, cfg, mode=mode, Z=Z, operators=operators,
                           parameter_count=count_parameters(model) if model else None)
        rep.stage_seconds["train"] = train_s
        return rep

    workers = worker_count(n_workers)
    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_seed, seeds))
    else:
        reports = [run_seed(s) for s in seeds]

    stage = "smooth" if mode not in ("correct_only", "base_only") else (
        "correct" if mode == "correct_only" else "base")
    final_accs = [r.test_accuracy[stage] for r in reports]
    base_accs = [r.test_accuracy.get("base") for r in reports]
    stage_seconds = {}
    for key in reports[0].stage_seconds:
        stage_seconds[key] = median(r.stage_seconds[key] for r in reports)
    iterations = {}
    for key in reports[0].iterations:
        iterations[key] = int(median(r.iterations[key] for r in reports))

    tuned = {"alpha_correct": cfg.correction.alpha_correct,
             "alpha_smooth": cfg.smoothing.alpha_smooth,
             "s": cfg.correction.s,
             "validation_accuracy": tuned_val}
    row = {
        "dataset": ds.name,
        "base": base_kind,
        "variant": variant,
        "label_source": label_source,
        "mode": mode,
        "n_seeds": len(seeds),
        "accuracy_mean": float(np.mean(final_accs)),
        "accuracy_std": _std(final_accs),
        "base_accuracy_mean": (float(np.mean(base_accs))
                               if base_accs[0] is not None else None),
        "parameter_count": reports[0].parameter_count,
        "alpha_correct": cfg.correction.alpha_correct,
        "alpha_smooth": cfg.smoothing.alpha_smooth,
        "s": cfg.correction.s,
        "train_seconds": stage_seconds.get("train"),
        "correct_seconds": stage_seconds.get("correct"),
        "smooth_seconds": stage_seconds.get("smooth"),
    }
    row["config_hash"] = config_hash({k: v for k, v in row.items()
                                      if k not in ("accuracy_mean", "accuracy_std",
                                                   "base_accuracy_mean",
                                                   "train_seconds", "correct_seconds",
                                                   "smooth_seconds")})
    row["manifest"] = RunManifest(
        dataset=ds.name, config_hash=row["config_hash"],
        software_version=__version__, base_kind=base_kind, variant=variant,
        label_source=label_source, mode=mode, seeds=seeds,
        accuracy_mean=row["accuracy_mean"], accuracy_std=row["accuracy_std"],
        base_accuracy_mean=row["base_accuracy_mean"],
        stage_seconds=stage_seconds, iterations=iterations,
        parameter_count=row["parameter_count"], tuned=tuned)
    return row


def bench_table(datasets, out_dir, base_kinds=("plain_linear",),
                variants=("autoscale", "fdiff_scale"),
                label_sources=("train_only",), mode: str = "full",
                seeds=range(5), tune: bool = True, cache_dir=None,
                fixed_splits: dict | None = None, base_cfg: BaseConfig | None = None,
                n_workers: int | None = None, figures: bool = True) -> list:
    """Run the full grid of cells and write CSV (+ figures) under out_dir.

    `datasets` maps name -> Dataset. Returns the row dictionaries in the
    order written. Cells run sequentially; seed runs inside a cell use the
    worker pool. The report writer is invoked once, after all cells.
    """
    from .report import render_bench_figures, write_bench_csv

    rows = []
    for name, ds in datasets.items():
        fixed = (fixed_splits or {}).get(name)
        for base_kind in base_kinds:
            for variant in variants:
                for label_source in label_sources:
                    rows.append(bench_cell(
                        ds, base_kind, variant, label_source, mode,
                        seeds, fixed_split=fixed, base_cfg=base_cfg,
                        tune=tune, cache_dir=cache_dir, n_workers=n_workers))
    write_bench_csv(out_dir, rows)
    if figures:
        render_bench_figures(out_dir, rows)
    return rows
