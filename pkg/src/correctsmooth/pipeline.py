"""Post-processing pipeline: residual error correction, then label smoothing.

The entry point is run_pipeline, which takes a precomputed base prediction
matrix (rows sum to one) and a split, and runs one of five modes:

    full          correct the residual, re-insert known labels, smooth
    correct_only  stop after the correction stage
    basic         smooth the base predictions directly, labels untouched
    lp_only       spread one-hot known labels; no base predictor at all
    base_only     argmax the base predictions, nothing graph-side

Correction comes in two variants. Autoscale spreads the training residual
with the symmetric operator and rescales each corrected row to the mean
training-error mass sigma. FDiff-scale diffuses with the row-stochastic
operator while holding every labeled row fixed, then applies s times the
result. The stored residual is prediction minus truth, so applying a
correction means subtracting the spread residual (on a training row the
unit-scale correction recovers the true labels exactly). Train rows under
Autoscale get the raw correction: they are overwritten with true labels
right after, so scaling them buys nothing.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, Split, one_hot
from .errors import ValidationError
from .graph import GraphOperator, OperatorKind, SparseGraph, make_operator
from .propagation import PropagationResult, SpreadParams, fixed_diffusion, label_spread

VARIANTS = ("autoscale", "fdiff_scale", "none")
LABEL_SOURCES = ("train_only", "train_plus_val")
MODES = ("full", "correct_only", "basic", "lp_only", "base_only")


@dataclass(frozen=True)
class CorrectionConfig:
    variant: str = "autoscale"
    alpha_correct: float = 0.9
    s: float = 1.0
    epsilon_row: float = 1e-9

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown correction variant {self.variant!r}")
        if self.s <= 0 or self.epsilon_row <= 0:
            raise ValidationError("s and epsilon_row must be positive")
        if not 0.0 <= self.alpha_correct < 1.0:
            raise ValidationError(f"alpha_correct must lie in [0, 1), got {self.alpha_correct}")


@dataclass(frozen=True)
class SmoothConfig:
    alpha_smooth: float = 0.8
    label_source: str = "train_only"
    mode: str = "standard"  # echoed in reports; "basic" marks G = Z runs

    def __post_init__(self):
        if not 0.0 <= self.alpha_smooth < 1.0:
            raise ValidationError(f"alpha_smooth must lie in [0, 1), got {self.alpha_smooth}")
        if self.label_source not in LABEL_SOURCES:
            raise ValidationError(f"unknown label source {self.label_source!r}")
        if self.mode not in ("standard", "basic"):
            raise ValidationError(f"unknown smooth mode {self.mode!r}")


@dataclass(frozen=True)
class PipelineConfig:
    correction: CorrectionConfig = CorrectionConfig()
    smoothing: SmoothConfig = SmoothConfig()
    max_iters: int = 100
    tol: float = 1e-6

    def spread_params(self, alpha: float) -> SpreadParams:
        return SpreadParams(alpha=alpha, max_iters=self.max_iters, tol=self.tol)


@dataclass
class PipelineReport:
    """Everything one run produced, numbers traceable to the config echo."""

    dataset: str
    mode: str
    config: dict
    n_nodes: int
    final_labels: np.ndarray
    final_scores: np.ndarray
    base_labels: np.ndarray | None = None
    corrected_labels: np.ndarray | None = None
    valid_accuracy: dict = field(default_factory=dict)
    test_accuracy: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    parameter_count: int | None = None


def residual_error(Z: np.ndarray, Y: np.ndarray, split: Split) -> np.ndarray:
    """Training-row residual Z - Y; exact zeros everywhere else."""
    E = np.zeros_like(Z)
    E[split.train] = Z[split.train] - Y[split.train]
    return E


def correct_autoscale(Z: np.ndarray, E: np.ndarray, op: GraphOperator,
                      split: Split, cfg: CorrectionConfig,
                      params: SpreadParams) -> tuple[np.ndarray, PropagationResult]:
    """Spread the residual, then rescale each corrected row to L1 mass sigma.

    sigma is the mean L1 norm of the training residual rows; the spread
    residual, renormalized to that mass, is subtracted from the base
    prediction on every non-train row. Rows whose spread error has L1
    norm at most epsilon_row keep the base prediction. Train rows get
    the unscaled correction.
    """
    if op.kind is not OperatorKind.SYM_NORM:
        raise ValidationError("autoscale correction needs the symmetric operator")
    result = label_spread(op, E, params)
    Ehat = result.matrix
    sigma = float(np.abs(E[split.train]).sum() / len(split.train))
    Z_r = Z.copy()
    Z_r[split.train] -= Ehat[split.train]
    mask = np.ones(Z.shape[0], dtype=bool)
    mask[split.train] = False
    others = np.nonzero(mask)[0]
    norms = np.abs(Ehat[others]).sum(axis=1)
    scaled = others[norms > cfg.epsilon_row]
    Z_r[scaled] -= sigma * Ehat[scaled] / norms[norms > cfg.epsilon_row][:, None]
    return Z_r, result


def correct_fdiff(Z: np.ndarray, E: np.ndarray, op: GraphOperator,
                  split: Split, cfg: CorrectionConfig,
                  params: SpreadParams) -> tuple[np.ndarray, PropagationResult]:
    """Diffuse the residual with every labeled row pinned; subtract s times it.

    Validation rows are pinned at zero (the residual is only defined on
    train rows), so the corrected prediction on them equals the base one.
    At s = 1 a training row comes back exactly to its true labels.
    """
    if op.kind is not OperatorKind.ROW_STOCH:
        raise ValidationError("fixed diffusion needs the row-stochastic operator")
    fixed = np.concatenate([split.train, split.valid])
    result = fixed_diffusion(op, E, fixed, params)
    return Z - cfg.s * result.matrix, result


def make_guess(Z_r: np.ndarray, Y: np.ndarray, split: Split,
               label_source: str = "train_only") -> np.ndarray:
    """Reset known-label rows to their one-hot truth before smoothing."""
    if label_source not in LABEL_SOURCES:
        raise ValidationError(f"unknown label source {label_source!r}")
    G = Z_r.copy()
    G[split.train] = Y[split.train]
    if label_source == "train_plus_val":
        G[split.valid] = Y[split.valid]
    return G


def smooth(G: np.ndarray, op: GraphOperator, cfg: SmoothConfig,
           params: SpreadParams | None = None
           ) -> tuple[np.ndarray, np.ndarray, PropagationResult]:
    """Spread the guess matrix; rows are score vectors, argmax classifies.

    Output rows are deliberately not renormalized: only the argmax is
    consumed downstream.
    """
    if op.kind is not OperatorKind.SYM_NORM:
        raise ValidationError("smoothing needs the symmetric operator")
    if params is None:
        params = SpreadParams(alpha=cfg.alpha_smooth)
    elif params.alpha != cfg.alpha_smooth:
        params = SpreadParams(alpha=cfg.alpha_smooth, max_iters=params.max_iters,
                              tol=params.tol)
    result = label_spread(op, G, params)
    return result.matrix, np.argmax(result.matrix, axis=1), result


def _check_base(Z, n, n_classes):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape != (n, n_classes):
        raise ValidationError(
            f"base prediction matrix is {Z.shape}, expected ({n}, {n_classes})")
    sums = Z.sum(axis=1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        row = int(np.argmax(np.abs(sums - 1.0)))
        raise ValidationError(
            f"base prediction row {row} sums to {sums[row]:.6f}, not 1")
    return Z


def _masked_accuracy(pred, labels, idx):
    idx = np.asarray(idx, dtype=np.int64)
    keep = idx[labels[idx] >= 0]
    if keep.size == 0:
        return float("nan")
    return float(np.mean(pred[keep] == labels[keep]))


def pipeline_operators(graph: SparseGraph, variant: str = "autoscale") -> dict:
    """Precompute the operators run_pipeline will ask for (reusable across runs)."""
    ops = {"sym": make_operator(graph, OperatorKind.SYM_NORM)}
    if variant == "fdiff_scale":
        ops["row"] = make_operator(graph, OperatorKind.ROW_STOCH)
    return ops


def run_pipeline(dataset: Dataset, split: Split, cfg: PipelineConfig,
                 mode: str = "full", Z: np.ndarray | None = None,
                 operators: dict | None = None,
                 parameter_count: int | None = None) -> PipelineReport:
    """Run one post-processing configuration end to end and score it.

    Z is the base prediction matrix; required by every mode except
    lp_only. Accuracies are reported on the validation and test index
    sets separately, per stage actually executed. Pass `operators` (from
    pipeline_operators) to amortize operator construction across runs.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown pipeline mode {mode!r}")
    n, c = dataset.n, dataset.n_classes
    if mode != "lp_only":
        if Z is None:
            raise ValidationError(f"mode {mode!r} needs a base prediction matrix")
        Z = _check_base(Z, n, c)
    labels = dataset.labels
    Y = one_hot(labels, c)
    operators = dict(operators) if operators else {}

    def op_for(kind):
        key = "sym" if kind is OperatorKind.SYM_NORM else "row"
        if key not in operators:
            operators[key] = make_operator(dataset.graph, kind)
        return operators[key]

    report = PipelineReport(dataset=dataset.name, mode=mode,
                            config={"mode": mode, **asdict(cfg)},
                            n_nodes=n, final_labels=None, final_scores=None,
                            parameter_count=parameter_count)

    def record(stage, pred, result=None, seconds=None):
        report.valid_accuracy[stage] = _masked_accuracy(pred, labels, split.valid)
        report.test_accuracy[stage] = _masked_accuracy(pred, labels, split.test)
        if result is not None:
            report.iterations[stage] = result.iterations_run
            report.converged[stage] = result.converged
        if seconds is not None:
            report.stage_seconds[stage] = seconds

    if Z is not None:
        report.base_labels = np.argmax(Z, axis=1)
        record("base", report.base_labels)

    if mode == "base_only":
        report.final_scores = Z
        report.final_labels = report.base_labels
        return report

    smooth_params = cfg.spread_params(cfg.smoothing.alpha_smooth)

    if mode == "basic":
        t0 = time.perf_counter()
        scores, pred, res = smooth(Z, op_for(OperatorKind.SYM_NORM),
                                   cfg.smoothing, smooth_params)
        record("smooth", pred, res, time.perf_counter() - t0)
        report.final_scores, report.final_labels = scores, pred
        return report

    if mode == "lp_only":
        G = np.zeros((n, c))
        G[split.train] = Y[split.train]
        if cfg.smoothing.label_source == "train_plus_val":
            G[split.valid] = Y[split.valid]
        t0 = time.perf_counter()
        scores, pred, res = smooth(G, op_for(OperatorKind.SYM_NORM),
                                   cfg.smoothing, smooth_params)
        record("smooth", pred, res, time.perf_counter() - t0)
        report.final_scores, report.final_labels = scores, pred
        return report

    # full / correct_only
    correct_params = cfg.spread_params(cfg.correction.alpha_correct)
    t0 = time.perf_counter()
    E = residual_error(Z, Y, split)
    if cfg.correction.variant == "autoscale":
        Z_r, res_c = correct_autoscale(Z, E, op_for(OperatorKind.SYM_NORM),
                                       split, cfg.correction, correct_params)
    elif cfg.correction.variant == "fdiff_scale":
        Z_r, res_c = correct_fdiff(Z, E, op_for(OperatorKind.ROW_STOCH),
                                   split, cfg.correction, correct_params)
    else:
        Z_r, res_c = Z.copy(), None
    report.corrected_labels = np.argmax(Z_r, axis=1)
    record("correct", report.corrected_labels, res_c, time.perf_counter() - t0)

    if mode == "correct_only":
        report.final_scores = Z_r
        report.final_labels = report.corrected_labels
        return report

    t0 = time.perf_counter()
    G = make_guess(Z_r, Y, split, cfg.smoothing.label_source)
    scores, pred, res_s = smooth(G, op_for(OperatorKind.SYM_NORM),
                                 cfg.smoothing, smooth_params)
    record("smooth", pred, res_s, time.perf_counter() - t0)
    report.final_scores, report.final_labels = scores, pred
    return report
