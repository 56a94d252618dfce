"""Correct-and-smooth post-processing for transductive node classification.

Train a cheap graph-agnostic base predictor, then let the graph do the
heavy lifting twice: spread the training residual to correct systematic
errors, and spread the corrected predictions with known labels pinned to
smooth the final answer. A regularized spectral embedding can augment the
input features along the way.
"""

__version__ = "0.1.0"

from .bench import (BaseConfig, base_predictions, bench_cell, bench_table,
                    grid_search)
from .data import (Dataset, Split, accuracy, fixed_split_load, load_dataset,
                   make_split, one_hot, save_dataset, save_split)
from .errors import ConvergenceError, CorrectSmoothError, ValidationError
from .graph import (GraphOperator, OperatorKind, SparseGraph, build_graph,
                    make_operator, read_edge_list, spmm)
from .models import (BaseModel, TrainConfig, count_parameters, grad_check,
                     load_model, predict_proba, save_model, train)
from .pipeline import (CorrectionConfig, PipelineConfig, PipelineReport,
                       SmoothConfig, correct_autoscale, correct_fdiff,
                       make_guess, residual_error, run_pipeline, smooth)
from .propagation import (PropagationResult, SpreadParams, dense_lp_oracle,
                          fixed_diffusion, label_spread)
from .spectral import (RegularizedOperator, SpectralEmbedding,
                       augment_features, get_embedding,
                       make_regularized_operator, standardize_columns,
                       top_eigs)

__all__ = [
    "__version__",
    "BaseConfig", "base_predictions", "bench_cell", "bench_table",
    "grid_search",
    "Dataset", "Split", "accuracy", "fixed_split_load", "load_dataset",
    "make_split", "one_hot", "save_dataset", "save_split",
    "ConvergenceError", "CorrectSmoothError", "ValidationError",
    "GraphOperator", "OperatorKind", "SparseGraph", "build_graph",
    "make_operator", "read_edge_list", "spmm",
    "BaseModel", "TrainConfig", "count_parameters", "grad_check",
    "load_model", "predict_proba", "save_model", "train",
    "CorrectionConfig", "PipelineConfig", "PipelineReport", "SmoothConfig",
    "correct_autoscale", "correct_fdiff", "make_guess", "residual_error",
    "run_pipeline", "smooth",
    "PropagationResult", "SpreadParams", "dense_lp_oracle",
    "fixed_diffusion", "label_spread",
    "RegularizedOperator", "SpectralEmbedding", "augment_features",
    "get_embedding", "make_regularized_operator", "standardize_columns",
    "top_eigs",
]
