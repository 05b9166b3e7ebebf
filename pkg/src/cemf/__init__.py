"""Weighted matrix factorization and co-occurrence embedded matrix
factorization (CEMF) for top-n recommendation from implicit feedback."""

from .core import FactorModel, Hyperparams, InteractionMatrix, confidence
from .errors import (
    CemfError,
    EmptyDatasetError,
    ParameterError,
    ParseError,
    SolverError,
)
from .eval import EvalReport, group_report, precision_recall_at_n, recommend_top_n
from .solver import LossBreakdown, TrainConfig, fit, init_model, loss
from .sppmi import CooccurrenceStats, SppmiMatrix, build_sppmi, count_cooccurrences

__version__ = "0.1.0"

__all__ = [
    "CemfError",
    "CooccurrenceStats",
    "EmptyDatasetError",
    "EvalReport",
    "FactorModel",
    "Hyperparams",
    "InteractionMatrix",
    "LossBreakdown",
    "ParameterError",
    "ParseError",
    "SolverError",
    "SppmiMatrix",
    "TrainConfig",
    "build_sppmi",
    "confidence",
    "count_cooccurrences",
    "fit",
    "group_report",
    "init_model",
    "loss",
    "precision_recall_at_n",
    "recommend_top_n",
]
