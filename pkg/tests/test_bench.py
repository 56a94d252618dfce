"""Benchmark runner and report artifacts.

grid_search is checked against a brute-force re-evaluation and against a
shuffled-test-labels copy of the dataset (the tuned config must not
move). bench_cell rows are pinned for determinism and worker-count
independence; the CSV writer's append/clash semantics and the per-node
recount oracle close the loop between summary numbers and artifacts.
"""

import numpy as np
import pytest

from correctsmooth.bench import (BaseConfig, base_predictions, bench_cell,
                                 bench_table, dataset_defaults, feature_mode,
                                 grid_search, prepare_features, worker_count)
from correctsmooth.data import Dataset, make_split
from correctsmooth.errors import ValidationError
from correctsmooth.pipeline import run_pipeline
from correctsmooth.report import (recount_accuracy, render_bench_figures,
                                  write_bench_csv, write_pernode_csv)
from correctsmooth.synth import make_synthetic

SMALL_GRID = (0.5, 0.8, 0.9)


@pytest.fixture(scope="module")
def setting():
    ds = make_synthetic(n=220, seed=5, homophily=0.75, noise=2.2)
    split = make_split(ds.n, (0.6, 0.2, 0.2), seed=0)
    Z, _, _ = base_predictions(ds, split, BaseConfig(kind="plain_linear",
                                                     epochs=80))
    return ds, split, Z


def test_dataset_defaults_lookup():
    d = dataset_defaults("Cora")
    assert d.fractions == (0.6, 0.2, 0.2) and d.mlp_hidden == 64
    d = dataset_defaults("US_County")
    assert d.fractions == (0.4, 0.1, 0.5)
    assert (d.mlp_layers, d.mlp_hidden, d.lr) == (5, 256, 0.005)
    assert dataset_defaults("arxiv").fractions is None
    assert dataset_defaults("never-heard-of-it").fractions == (0.6, 0.2, 0.2)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("CS_NUM_THREADS", raising=False)
    assert worker_count() == 1
    assert worker_count(4) == 4
    assert worker_count(0) == 1
    monkeypatch.setenv("CS_NUM_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2  # explicit request beats the env
    monkeypatch.setenv("CS_NUM_THREADS", "lots")
    with pytest.raises(ValidationError):
        worker_count()


def test_feature_mode_selection():
    with_x = make_synthetic(n=40, seed=0)
    bare = Dataset(name="bare", graph=with_x.graph, features=None,
                   labels=with_x.labels, n_classes=with_x.n_classes)
    assert feature_mode(with_x, "plain_linear") == "raw_only"
    assert feature_mode(with_x, "linear") == "concat"
    assert feature_mode(with_x, "mlp") == "concat"
    assert feature_mode(bare, "mlp") == "spectral_only"


def test_prepare_features_shapes():
    ds = make_synthetic(n=50, seed=1, n_features=7)
    raw = prepare_features(ds, BaseConfig(kind="plain_linear"))
    assert raw.shape == (50, 7)
    both = prepare_features(ds, BaseConfig(kind="linear", spectral_k=6))
    assert both.shape == (50, 13)
    bare = Dataset(name="bare", graph=ds.graph, features=None,
                   labels=ds.labels, n_classes=ds.n_classes)
    spec = prepare_features(bare, BaseConfig(kind="mlp", spectral_k=6))
    assert spec.shape == (50, 6)
    # k is clipped to n - 1 when the graph is small
    tiny = make_synthetic(n=12, seed=2, n_classes=2)
    emb = prepare_features(
        Dataset(name="t", graph=tiny.graph, features=None, labels=tiny.labels,
                n_classes=tiny.n_classes),
        BaseConfig(kind="mlp", spectral_k=128))
    assert emb.shape[1] == 11


def test_grid_search_singleton_grid(setting):
    ds, split, Z = setting
    cfg, val, trace = grid_search(ds, split, Z, variant="autoscale",
                                  alpha_correct_grid=(0.7,),
                                  alpha_smooth_grid=(0.6,))
    assert cfg.correction.alpha_correct == 0.7
    assert cfg.smoothing.alpha_smooth == 0.6
    assert len(trace) == 1 and trace[0]["valid_accuracy"] == val


def test_grid_search_best_matches_trace_and_reevaluation(setting):
    ds, split, Z = setting
    cfg, val, trace = grid_search(ds, split, Z, variant="autoscale",
                                  alpha_correct_grid=SMALL_GRID,
                                  alpha_smooth_grid=SMALL_GRID)
    assert len(trace) == len(SMALL_GRID) ** 2
    assert val == max(t["valid_accuracy"] for t in trace)
    rep = run_pipeline(ds, split, cfg, mode="full", Z=Z)
    assert rep.valid_accuracy["smooth"] == pytest.approx(val, abs=1e-12)


def test_grid_search_tie_breaks_toward_smaller_alphas(setting):
    ds, split, Z = setting
    cfg, val, trace = grid_search(ds, split, Z, variant="autoscale",
                                  alpha_correct_grid=SMALL_GRID,
                                  alpha_smooth_grid=SMALL_GRID)
    ties = [t for t in trace if t["valid_accuracy"] == val]
    smallest = min((t["alpha_correct"], t["s"], t["alpha_smooth"]) for t in ties)
    assert (cfg.correction.alpha_correct, cfg.correction.s,
            cfg.smoothing.alpha_smooth) == smallest


def test_grid_search_never_reads_test_labels(setting):
    ds, split, Z = setting
    shuffled = ds.labels.copy()
    rng = np.random.default_rng(7)
    shuffled[split.test] = rng.permutation(shuffled[split.test])
    ds2 = Dataset(name=ds.name, graph=ds.graph, features=ds.features,
                  labels=shuffled, n_classes=ds.n_classes)
    out1 = grid_search(ds, split, Z, alpha_correct_grid=SMALL_GRID,
                       alpha_smooth_grid=SMALL_GRID)
    out2 = grid_search(ds2, split, Z, alpha_correct_grid=SMALL_GRID,
                       alpha_smooth_grid=SMALL_GRID)
    assert out1[0] == out2[0] and out1[1] == out2[1]
    assert out1[2] == out2[2]


def test_grid_search_s_grid_only_active_for_fdiff(setting):
    ds, split, Z = setting
    _, _, trace_a = grid_search(ds, split, Z, variant="autoscale",
                                alpha_correct_grid=(0.9,),
                                alpha_smooth_grid=(0.8,),
                                s_grid=(0.5, 1.0))
    assert len(trace_a) == 1
    _, _, trace_f = grid_search(ds, split, Z, variant="fdiff_scale",
                                alpha_correct_grid=(0.9,),
                                alpha_smooth_grid=(0.8,),
                                s_grid=(0.5, 1.0))
    assert len(trace_f) == 2
    assert sorted(t["s"] for t in trace_f) == [0.5, 1.0]


def test_bench_cell_row_shape_and_determinism(setting):
    ds, _, _ = setting
    kwargs = dict(fractions=(0.6, 0.2, 0.2), seeds=(0, 1),
                  base_cfg=BaseConfig(kind="plain_linear", epochs=60),
                  tune=False)
    row = bench_cell(ds, "plain_linear", "autoscale", "train_only", "full",
                     **kwargs)
    for key in ("dataset", "base", "variant", "label_source", "mode",
                "n_seeds", "accuracy_mean", "accuracy_std",
                "base_accuracy_mean", "parameter_count", "alpha_correct",
                "alpha_smooth", "s", "train_seconds", "correct_seconds",
                "smooth_seconds", "config_hash", "manifest"):
        assert key in row, key
    assert row["n_seeds"] == 2 and 0.0 <= row["accuracy_mean"] <= 1.0
    again = bench_cell(ds, "plain_linear", "autoscale", "train_only", "full",
                       **kwargs)
    assert again["accuracy_mean"] == row["accuracy_mean"]
    assert again["accuracy_std"] == row["accuracy_std"]
    assert again["config_hash"] == row["config_hash"]


def test_bench_cell_worker_pool_matches_serial(setting):
    ds, _, _ = setting
    kwargs = dict(fractions=(0.6, 0.2, 0.2), seeds=(0, 1, 2),
                  base_cfg=BaseConfig(kind="plain_linear", epochs=40),
                  tune=False)
    serial = bench_cell(ds, "plain_linear", "autoscale", "train_only", "full",
                        n_workers=1, **kwargs)
    pooled = bench_cell(ds, "plain_linear", "autoscale", "train_only", "full",
                        n_workers=3, **kwargs)
    assert pooled["accuracy_mean"] == serial["accuracy_mean"]
    assert pooled["accuracy_std"] == serial["accuracy_std"]


def test_bench_cell_lp_only_without_base(setting):
    ds, _, _ = setting
    row = bench_cell(ds, "none", "none", "train_only", "lp_only",
                     fractions=(0.6, 0.2, 0.2), seeds=(0,), tune=False)
    assert row["base_accuracy_mean"] is None
    assert row["parameter_count"] is None
    assert row["train_seconds"] == 0.0
    assert row["accuracy_mean"] > 0.5


def test_bench_cell_requires_split_source():
    ds = make_synthetic(n=60, seed=0, name="arxiv")
    with pytest.raises(ValidationError, match="fixed split"):
        bench_cell(ds, "plain_linear", "autoscale", "train_only", "full",
                   seeds=(0,), tune=False)
    with pytest.raises(ValidationError, match="seed"):
        bench_cell(ds, "plain_linear", "autoscale", "train_only", "full",
                   fractions=(0.6, 0.2, 0.2), seeds=(), tune=False)


def test_write_bench_csv_appends_and_rejects_clashes(tmp_path, setting):
    ds, _, _ = setting
    row = bench_cell(ds, "plain_linear", "autoscale", "train_only", "full",
                     fractions=(0.6, 0.2, 0.2), seeds=(0,),
                     base_cfg=BaseConfig(kind="plain_linear", epochs=40),
                     tune=False)
    path = write_bench_csv(tmp_path, [row])
    first = path.read_text()
    # rewriting the identical row is a no-op
    write_bench_csv(tmp_path, [row])
    assert path.read_text() == first
    clash = dict(row)
    clash["accuracy_mean"] = row["accuracy_mean"] + 0.25
    with pytest.raises(ValidationError, match="differs"):
        write_bench_csv(tmp_path, [clash])
    # a genuinely different config appends one line
    other = bench_cell(ds, "plain_linear", "autoscale", "train_plus_val",
                       "full", fractions=(0.6, 0.2, 0.2), seeds=(0,),
                       base_cfg=BaseConfig(kind="plain_linear", epochs=40),
                       tune=False)
    write_bench_csv(tmp_path, [other])
    assert len(path.read_text().strip().splitlines()) == 3


def test_pernode_csv_recount_matches_report(tmp_path, setting):
    ds, split, Z = setting
    from correctsmooth.pipeline import PipelineConfig
    rep = run_pipeline(ds, split, PipelineConfig(), mode="full", Z=Z)
    path = write_pernode_csv(tmp_path / "pernode.csv", rep, ds.labels)
    for part, index in (("test", split.test), ("valid", split.valid)):
        recount = recount_accuracy(path, index=index)
        book = rep.test_accuracy if part == "test" else rep.valid_accuracy
        for stage in ("base", "correct", "smooth"):
            assert recount[stage] == pytest.approx(book[stage], abs=1e-12), (
                part, stage)


def test_pernode_csv_marks_absent_stages(tmp_path, setting):
    ds, split, Z = setting
    from correctsmooth.pipeline import PipelineConfig
    rep = run_pipeline(ds, split, PipelineConfig(), mode="base_only", Z=Z)
    path = write_pernode_csv(tmp_path / "pernode.csv", rep, ds.labels)
    recount = recount_accuracy(path)
    assert "correct" not in recount  # corrected column is all -1
    assert "base" in recount


def test_bench_table_writes_csv_and_figures(tmp_path, setting):
    ds, _, _ = setting
    rows = bench_table({ds.name: ds}, tmp_path, base_kinds=("plain_linear",),
                       variants=("autoscale",), seeds=(0,), tune=False,
                       base_cfg=BaseConfig(kind="plain_linear", epochs=40))
    assert len(rows) == 1
    assert (tmp_path / "bench.csv").exists()
    pngs = sorted(p.name for p in tmp_path.glob("*.png"))
    assert "accuracy_by_dataset.png" in pngs
    for p in tmp_path.glob("*.png"):
        assert p.stat().st_size > 1000


def test_render_bench_figures_skips_params_plot_without_counts(tmp_path, setting):
    ds, _, _ = setting
    row = bench_cell(ds, "none", "none", "train_only", "lp_only",
                     fractions=(0.6, 0.2, 0.2), seeds=(0,), tune=False)
    made = render_bench_figures(tmp_path, [row])
    names = sorted(p.name for p in made)
    assert "accuracy_by_dataset.png" in names
    assert "params_vs_accuracy.png" not in names
