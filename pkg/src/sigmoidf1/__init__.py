"""Smooth confusion-matrix surrogate losses for multilabel classification."""
from .core import SigmoidParams, finite_diff_grad, seeded_rng, sigmoid_param, sigmoid_param_grad, softmax
from .losses import (
    LossSpec,
    LossValue,
    SmoothConfusion,
    cross_entropy_loss,
    focal_loss,
    sigmoidF1_loss,
    smooth_confusion,
    unbounded_confusion,
    unboundedF1_loss,
)
from .metrics import ConfusionCounts, MetricReport, aggregate, evaluate, hard_confusion, mean_ap, prf_from_counts

__version__ = "0.1.0"

__all__ = [
    "SigmoidParams", "finite_diff_grad", "seeded_rng", "sigmoid_param", "sigmoid_param_grad", "softmax",
    "LossSpec", "LossValue", "SmoothConfusion", "cross_entropy_loss", "focal_loss", "sigmoidF1_loss",
    "smooth_confusion", "unbounded_confusion", "unboundedF1_loss",
    "ConfusionCounts", "MetricReport", "aggregate", "evaluate", "hard_confusion", "mean_ap", "prf_from_counts",
]
