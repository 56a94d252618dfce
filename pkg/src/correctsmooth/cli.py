"""Command-line surface.

Subcommands: prep, split, train, cas, bench, eval, synth, convert.
Exit codes: 0 success, 2 validation error (also argparse's own code),
3 non-convergence.

Library modules are imported inside the command handlers so that
--strict-deterministic can pin the numeric libraries to one thread
before numpy first loads. CS_NUM_THREADS controls the bench worker
pool.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .errors import ConvergenceError, CorrectSmoothError, ValidationError

_VARIANT_MAP = {"autoscale": "autoscale", "fdiff": "fdiff_scale", "none": "none"}
_LABELS_MAP = {"train": "train_only", "train+val": "train_plus_val"}
_MODE_MAP = {"full": "full", "correct-only": "correct_only", "basic": "basic",
             "lp-only": "lp_only", "base-only": "base_only"}

_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
              "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


def _comma_list(text: str) -> list:
    return [part.strip() for part in text.split(",") if part.strip()]


def _fractions(text: str) -> tuple:
    parts = _comma_list(text)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated fractions")
    return tuple(float(p) for p in parts)


def _load_split(args, n):
    from .bench import dataset_defaults
    from .data import fixed_split_load, make_split

    if getattr(args, "split", None):
        return fixed_split_load(args.split, n=n)
    name = Path(args.data_dir).name
    fractions = getattr(args, "fractions", None) or dataset_defaults(name).fractions
    if fractions is None:
        raise ValidationError(
            f"dataset {name} uses a fixed official split; pass --split FILE")
    return make_split(n, fractions, getattr(args, "seed", 0))


def cmd_prep(args) -> int:
    from .data import load_dataset
    from .spectral import get_embedding

    ds = load_dataset(args.data_dir)
    summary = {
        "name": ds.name,
        "nodes": ds.n,
        "edges": ds.graph.num_edges,
        "classes": ds.n_classes,
        "components": ds.graph.component_count(),
        "features": None if ds.features is None else list(ds.features.shape),
        "graph_hash": ds.graph.content_hash()[:16],
    }
    if args.spectral_k > 0:
        cache_dir = args.cache_dir or Path(args.data_dir) / "cache"
        emb = get_embedding(ds.graph, k=min(args.spectral_k, ds.n - 1),
                            tau=args.tau, seed=args.seed, cache_dir=cache_dir)
        summary["spectral"] = {"k": emb.k, "cache_dir": str(cache_dir),
                               "top_value": float(emb.values[0])}
    text = json.dumps(summary, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_split(args) -> int:
    from .bench import dataset_defaults
    from .data import load_dataset, make_split, save_split

    ds = load_dataset(args.data_dir)
    fractions = args.fractions or dataset_defaults(ds.name).fractions
    if fractions is None:
        raise ValidationError(
            f"dataset {ds.name} uses a fixed official split; generate nothing")
    split = make_split(ds.n, fractions, args.seed)
    save_split(args.out, split)
    print(f"wrote {args.out}: train={len(split.train)} valid={len(split.valid)} "
          f"test={len(split.test)} seed={args.seed}")
    return 0


def cmd_train(args) -> int:
    from .bench import BaseConfig, base_predictions
    from .data import load_dataset
    from .matrixio import save_matrix
    from .models import count_parameters, save_model

    ds = load_dataset(args.data_dir)
    split = _load_split(args, ds.n)
    cfg = BaseConfig(kind=args.base, spectral_k=args.spectral_k,
                     spectral_tau=args.tau, epochs=args.epochs, lr=args.lr,
                     layers=args.layers, hidden=args.hidden,
                     weight_decay=args.weight_decay, seed=args.seed,
                     standardize=not args.no_standardize)
    cache_dir = args.cache_dir or Path(args.data_dir) / "cache"
    Z, model, _ = base_predictions(ds, split, cfg, cache_dir=cache_dir)
    save_matrix(args.out_z, Z, binary=args.binary)
    if args.out_model:
        save_model(args.out_model, model)
    h = model.history
    print(json.dumps({
        "dataset": ds.name, "base": args.base,
        "config": dataclasses.asdict(cfg),
        "parameters": count_parameters(model),
        "best_epoch": h.best_epoch,
        "best_validation_accuracy": h.best_val_accuracy,
        "final_loss": h.losses[-1],
        "z_file": str(args.out_z),
    }, indent=2))
    return 0


def cmd_cas(args) -> int:
    from .bench import DEFAULT_S_GRID, grid_search
    from .data import load_dataset
    from .matrixio import load_matrix
    from .pipeline import (CorrectionConfig, PipelineConfig, SmoothConfig,
                           run_pipeline)
    from .report import (render_stage_figure, write_pernode_csv,
                         write_run_report)

    ds = load_dataset(args.data_dir)
    split = _load_split(args, ds.n)
    mode = _MODE_MAP[args.mode]
    variant = _VARIANT_MAP[args.variant]
    label_source = _LABELS_MAP[args.labels]

    Z = None
    if mode != "lp_only":
        if not args.base_z:
            raise ValidationError(f"mode {args.mode} needs --base-z FILE")
        Z = load_matrix(args.base_z)

    if args.tune:
        s_grid = DEFAULT_S_GRID if variant == "fdiff_scale" else (args.scale_s,)
        cfg, tuned_val, _ = grid_search(ds, split, Z, variant=variant, mode=mode,
                                        label_source=label_source, s_grid=s_grid,
                                        max_iters=args.max_iters, tol=args.tol)
        extra = {"tuned_on_validation": True,
                 "tuning_validation_accuracy": tuned_val}
    else:
        cfg = PipelineConfig(
            correction=CorrectionConfig(variant=variant,
                                        alpha_correct=args.alpha_correct,
                                        s=args.scale_s),
            smoothing=SmoothConfig(alpha_smooth=args.alpha_smooth,
                                   label_source=label_source),
            max_iters=args.max_iters, tol=args.tol)
        extra = {"tuned_on_validation": False}

    report = run_pipeline(ds, split, cfg, mode=mode, Z=Z)

    out_dir = Path(args.out_dir)
    from .report import config_hash
    tag = config_hash(report.config)
    paths = {"report": str(write_run_report(out_dir / f"run_{tag}.json",
                                            report, extra))}
    if not args.no_pernode:
        paths["pernode"] = str(write_pernode_csv(out_dir / f"pernode_{tag}.csv",
                                                 report, ds.labels))
    if not args.no_figures:
        fig = render_stage_figure(out_dir / f"stages_{tag}.png", report)
        if fig is not None:
            paths["figure"] = str(fig)

    final_stage = ("smooth" if mode not in ("correct_only", "base_only")
                   else ("correct" if mode == "correct_only" else "base"))
    print(json.dumps({
        "dataset": ds.name, "mode": args.mode, "variant": args.variant,
        "labels": args.labels,
        "test_accuracy": report.test_accuracy.get(final_stage),
        "valid_accuracy": report.valid_accuracy.get(final_stage),
        "config_hash": tag, "artifacts": paths,
    }, indent=2))

    if args.require_convergence and not all(report.converged.values()):
        stage = next(k for k, v in report.converged.items() if not v)
        raise ConvergenceError(
            f"stage {stage!r} did not reach tol={args.tol} in {args.max_iters} iterations")
    for stage, ok in report.converged.items():
        if not ok:
            print(f"warning: stage {stage!r} stopped at max_iters before tol",
                  file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    from .bench import BaseConfig, bench_table
    from .data import fixed_split_load, load_dataset

    root = Path(args.data_root)
    names = args.datasets or sorted(
        p.name for p in root.iterdir() if (p / "labels.csv").exists())
    if not names:
        raise ValidationError(f"no dataset directories under {root}")
    datasets, fixed_splits = {}, {}
    for name in names:
        ds = load_dataset(root / name)
        datasets[name] = ds
        split_file = root / name / (
            "split_official.json" if args.split_index == 0
            else f"split_official_{args.split_index}.json")
        if split_file.exists():
            fixed_splits[name] = fixed_split_load(split_file, n=ds.n)
    base_cfg = None
    if args.epochs is not None:
        base_cfg = BaseConfig(kind=args.bases[0], epochs=args.epochs)
    rows = bench_table(
        datasets, args.out_dir,
        base_kinds=tuple(args.bases), variants=tuple(_VARIANT_MAP[v] for v in args.variants),
        label_sources=tuple(_LABELS_MAP[l] for l in args.labels),
        mode=_MODE_MAP[args.mode], seeds=range(args.seeds),
        tune=not args.no_tune, cache_dir=args.cache_dir,
        fixed_splits=fixed_splits, base_cfg=base_cfg,
        figures=not args.no_figures)
    for row in rows:
        print(f"{row['dataset']:>12} {row['base']:>12} {row['variant']:>11} "
              f"{row['label_source']:>14} acc={100 * row['accuracy_mean']:6.2f} "
              f"+-{100 * row['accuracy_std']:.2f} [{row['config_hash']}]")
    print(f"report dir: {args.out_dir}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from .data import accuracy, load_dataset
    from .report import recount_accuracy

    ds = load_dataset(args.data_dir)
    split = _load_split(args, ds.n)
    index = {"train": split.train, "valid": split.valid, "test": split.test,
             "all": np.arange(ds.n)}[args.on]

    with open(args.pred) as fh:
        first = fh.readline()
    if "final_label" in first:
        per_stage = recount_accuracy(args.pred, index=index)
        print(json.dumps({"on": args.on, "accuracy": per_stage}, indent=2))
        return 0
    pred = np.loadtxt(args.pred, dtype=np.int64)
    if pred.ndim != 1 or pred.shape[0] != ds.n:
        raise ValidationError(
            f"prediction file has shape {pred.shape}, expected ({ds.n},)")
    acc = accuracy(pred, ds.labels, index)
    print(json.dumps({"on": args.on, "accuracy": acc}, indent=2))
    return 0


def cmd_synth(args) -> int:
    from .data import save_dataset
    from .synth import make_synthetic

    ds = make_synthetic(n=args.n, n_classes=args.classes,
                        n_features=args.features, avg_degree=args.avg_degree,
                        homophily=args.homophily, noise=args.noise,
                        seed=args.seed, with_features=not args.no_features,
                        name=Path(args.out_dir).name)
    save_dataset(args.out_dir, ds)
    print(f"wrote {args.out_dir}: n={ds.n} edges={ds.graph.num_edges} "
          f"classes={ds.n_classes}")
    return 0


def cmd_convert(args) -> int:
    from . import convert as conv

    if args.source == "planetoid":
        ds = conv.convert_planetoid(args.src, args.name, args.out_dir)
    elif args.source == "ogb":
        ds = conv.convert_ogb(args.src, args.name, args.out_dir)
    else:
        if not args.label_file:
            raise ValidationError("snap-email needs --label-file")
        ds = conv.convert_snap_email(args.src, args.label_file, args.out_dir)
    print(f"wrote {args.out_dir}: n={ds.n} edges={ds.graph.num_edges} "
          f"classes={ds.n_classes}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--strict-deterministic", action="store_true",
                        help="pin numeric libraries to one thread and disable "
                             "worker pools for bitwise-reproducible output")

    parser = argparse.ArgumentParser(
        prog="correctsmooth",
        description="Correct-and-smooth post-processing for node classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", parents=[common],
                       help="validate a dataset directory, optionally cache the "
                            "spectral embedding")
    p.add_argument("data_dir")
    p.add_argument("--spectral-k", type=int, default=0,
                   help="embedding dimension to precompute (0 = skip)")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out", default=None, help="also write the summary JSON here")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("split", parents=[common], help="generate a split file")
    p.add_argument("data_dir")
    p.add_argument("--fractions", type=_fractions, default=None,
                   help="train,valid,test e.g. 0.6,0.2,0.2 (default: per-dataset)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common],
                       help="train a base predictor, save checkpoint + Z matrix")
    p.add_argument("data_dir")
    p.add_argument("--split", default=None, help="split file (default: generate)")
    p.add_argument("--fractions", type=_fractions, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base", choices=("plain_linear", "linear", "mlp"),
                   default="plain_linear")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--spectral-k", type=int, default=128)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--out-z", required=True, help="base prediction matrix file")
    p.add_argument("--out-model", default=None, help="checkpoint file (.npz)")
    p.add_argument("--binary", action="store_true",
                   help="write the Z matrix in binary instead of CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cas", parents=[common],
                       help="correct and smooth a base prediction matrix")
    p.add_argument("data_dir")
    p.add_argument("--split", default=None)
    p.add_argument("--fractions", type=_fractions, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-z", default=None, help="matrix file from `train`")
    p.add_argument("--variant", choices=("autoscale", "fdiff", "none"),
                   default="autoscale")
    p.add_argument("--alpha-correct", type=float, default=0.9)
    p.add_argument("--alpha-smooth", type=float, default=0.8)
    p.add_argument("--scale-s", type=float, default=1.0)
    p.add_argument("--labels", choices=("train", "train+val"), default="train")
    p.add_argument("--mode", choices=("full", "correct-only", "basic",
                                      "lp-only", "base-only"), default="full")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--tune", action="store_true",
                   help="grid-search alphas (and s for fdiff) on validation")
    p.add_argument("--out-dir", default="cas_out")
    p.add_argument("--no-pernode", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--require-convergence", action="store_true",
                   help="exit 3 if a propagation stage hits max-iters")
    p.set_defaults(func=cmd_cas)

    p = sub.add_parser("bench", parents=[common],
                       help="reproduce benchmark table rows over split seeds")
    p.add_argument("data_root")
    p.add_argument("--datasets", type=_comma_list, default=None)
    p.add_argument("--bases", type=_comma_list, default=["plain_linear"])
    p.add_argument("--variants", type=_comma_list, default=["autoscale", "fdiff"])
    p.add_argument("--labels", type=_comma_list, default=["train"])
    p.add_argument("--mode", choices=tuple(_MODE_MAP), default="full")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=None,
                   help="override base-model training epochs for every cell")
    p.add_argument("--split-index", type=int, default=0,
                   help="which official split file to use when several exist")
    p.add_argument("--no-tune", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out-dir", default="bench_out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", parents=[common],
                       help="score a prediction file against stored labels")
    p.add_argument("data_dir")
    p.add_argument("--pred", required=True,
                   help="per-node CSV from `cas`, or one label per line")
    p.add_argument("--split", default=None)
    p.add_argument("--fractions", type=_fractions, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--on", choices=("train", "valid", "test", "all"),
                   default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic homophilous dataset directory")
    p.add_argument("out_dir")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--avg-degree", type=float, default=8.0)
    p.add_argument("--homophily", type=float, default=0.8)
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-features", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", parents=[common],
                       help="convert a public benchmark download to a dataset dir")
    p.add_argument("source", choices=("planetoid", "ogb", "snap-email"))
    p.add_argument("src", help="source directory (or edge file for snap-email)")
    p.add_argument("out_dir")
    p.add_argument("--name", default="dataset",
                   help="dataset name (planetoid: the ind.<name> prefix)")
    p.add_argument("--label-file", default=None, help="snap-email label file")
    p.set_defaults(func=cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "strict_deterministic", False):
        # Must happen before numpy is first imported anywhere.
        for var in _BLAS_VARS:
            os.environ.setdefault(var, "1")
        os.environ["CS_NUM_THREADS"] = "1"
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CorrectSmoothError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
