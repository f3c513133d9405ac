"""Smooth confusion-matrix entries and the losses built on them.

Every loss returns a :class:`LossValue` holding the scalar loss and its exact
gradient with respect to the prediction matrix.  All losses are oriented so
that lower is better: the F1 surrogates return ``1 - F1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import SigmoidParams, sigmoid_param, sigmoid_param_grad

EPS = 1e-16
CLAMP = 1e-12

LOSS_NAMES = ("cross_entropy", "focal", "unboundedF1", "sigmoidF1")
# accepted spellings, matched case-insensitively
_ALIASES = {
    "cross_entropy": "cross_entropy",
    "crossentropy": "cross_entropy",
    "ce": "cross_entropy",
    "focal": "focal",
    "focalloss": "focal",
    "unboundedf1": "unboundedF1",
    "sigmoidf1": "sigmoidF1",
}
RESERVED_NAMES = ("asl",)


def _check_pair(Y, P):
    Y = np.asarray(Y, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if P.ndim == 1:
        P = P[:, None]
    if Y.shape != P.shape:
        raise ValueError(f"label matrix shape {Y.shape} does not match prediction shape {P.shape}")
    return Y, P


@dataclass(frozen=True)
class SmoothConfusion:
    """Real-valued per-class confusion entries.

    ``variant`` is ``"unbounded"`` (raw predictions) or ``"smooth"``
    (predictions passed through the parameterised sigmoid).
    """

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    variant: str

    def total(self) -> np.ndarray:
        return self.tp + self.fp + self.fn + self.tn


def _soft_counts(Y, Q, variant):
    return SmoothConfusion(
        tp=(Q * Y).sum(axis=0),
        fp=(Q * (1 - Y)).sum(axis=0),
        fn=((1 - Q) * Y).sum(axis=0),
        tn=((1 - Q) * (1 - Y)).sum(axis=0),
        variant=variant,
    )


def unbounded_confusion(Y, P) -> SmoothConfusion:
    Y, P = _check_pair(Y, P)
    return _soft_counts(Y, P, "unbounded")


def smooth_confusion(Y, P, params: SigmoidParams = SigmoidParams()) -> SmoothConfusion:
    Y, P = _check_pair(Y, P)
    return _soft_counts(Y, sigmoid_param(P, params), "smooth")


@dataclass
class LossValue:
    loss: float
    grad: np.ndarray
    per_class_f1: Optional[np.ndarray] = None


def _soft_f1_loss(Y, Q, dQ, aggregation):
    """``1 - F1`` over soft predictions ``Q`` with ``dQ = dQ/dP`` element-wise."""
    c = _soft_counts(Y, Q, "smooth")
    denom = 2 * c.tp + c.fn + c.fp + EPS
    per_class = 2 * c.tp / denom
    if aggregation == "macro":
        # d(2tp + fn + fp)/dQ_ij == 1, so dF_j/dQ_ij = (2 y_ij D_j - 2 tp_j) / D_j^2
        dF = (2 * Y * denom - 2 * c.tp) / denom**2
        loss = 1.0 - float(per_class.mean())
        grad = -dF * dQ / Y.shape[1]
    elif aggregation == "micro":
        tp = c.tp.sum()
        d = 2 * tp + c.fn.sum() + c.fp.sum() + EPS
        loss = 1.0 - float(2 * tp / d)
        grad = -((2 * Y * d - 2 * tp) / d**2) * dQ
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}; expected 'macro' or 'micro'")
    return LossValue(loss=loss, grad=grad, per_class_f1=per_class)


def sigmoidF1_loss(Y, P, params: SigmoidParams = SigmoidParams(), aggregation: str = "macro") -> LossValue:
    """Smooth F1 loss: F1 computed from sigmoid-thresholded confusion entries.

    Args:
        Y: binary labels, shape (n, C).
        P: predictions, shape (n, C); probabilities by default, raw head
            outputs when the caller runs in logit mode.
        params: slope and offset of the thresholding sigmoid.
        aggregation: ``"macro"`` averages per-class F1 over classes,
            ``"micro"`` pools the entries over classes first.
    """
    Y, P = _check_pair(Y, P)
    return _soft_f1_loss(Y, sigmoid_param(P, params), sigmoid_param_grad(P, params), aggregation)


def unboundedF1_loss(Y, P, aggregation: str = "macro") -> LossValue:
    Y, P = _check_pair(Y, P)
    return _soft_f1_loss(Y, P, np.ones_like(P), aggregation)


def cross_entropy_loss(Y, P) -> LossValue:
    """Element-wise binary cross-entropy averaged over examples and classes.

    Predictions are clamped to ``[1e-12, 1 - 1e-12]``; the gradient is
    evaluated at the clamped value and passed straight through the clamp.
    """
    Y, P = _check_pair(Y, P)
    p = np.clip(P, CLAMP, 1 - CLAMP)
    m = p.size
    loss = -(Y * np.log(p) + (1 - Y) * np.log(1 - p))
    grad = (p - Y) / (p * (1 - p)) / m
    return LossValue(loss=float(loss.mean()), grad=grad)


def focal_loss(Y, P, gamma: float = 2.0) -> LossValue:
    """Binary focal loss ``-(1 - p_t)^gamma log p_t`` (no class weighting)."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if gamma == 0:
        # bit-identical reduction, not merely equal up to rounding
        return cross_entropy_loss(Y, P)
    Y, P = _check_pair(Y, P)
    p = np.clip(P, CLAMP, 1 - CLAMP)
    m = p.size
    pt = np.where(Y == 1, p, 1 - p)
    log_pt = np.log(pt)
    w = (1 - pt) ** gamma
    loss = -w * log_pt
    d_pt = gamma * (1 - pt) ** (gamma - 1) * log_pt - w / pt
    grad = d_pt * (2 * Y - 1) / m
    return LossValue(loss=float(loss.mean()), grad=grad)


def canonical_loss_name(name: str) -> str:
    key = name.strip().lower()
    if key in RESERVED_NAMES:
        raise NotImplementedError(
            f"loss {name!r} is a reserved baseline name and is not implemented in this package"
        )
    try:
        return _ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; expected one of {LOSS_NAMES}") from None


@dataclass(frozen=True)
class LossSpec:
    """A named loss with its hyperparameters.

    ``scale`` only affects sigmoidF1: ``"prob"`` applies the thresholding
    sigmoid to logistic probabilities, ``"logit"`` applies it to the raw
    head outputs.  The other losses always consume probabilities.
    """

    name: str
    beta: float = 1.0
    eta: float = 0.0
    gamma: float = 2.0
    scale: str = "prob"
    aggregation: str = "macro"

    def __post_init__(self):
        object.__setattr__(self, "name", canonical_loss_name(self.name))
        if self.scale not in ("prob", "logit"):
            raise ValueError(f"scale must be 'prob' or 'logit', got {self.scale!r}")
        if self.aggregation not in ("macro", "micro"):
            raise ValueError(f"aggregation must be 'macro' or 'micro', got {self.aggregation!r}")

    @property
    def consumes(self) -> str:
        """Which head output the loss differentiates against: ``"prob"`` or ``"logit"``."""
        return self.scale if self.name == "sigmoidF1" else "prob"

    def __call__(self, Y, P) -> LossValue:
        if self.name == "sigmoidF1":
            return sigmoidF1_loss(Y, P, SigmoidParams(self.beta, self.eta), self.aggregation)
        if self.name == "unboundedF1":
            return unboundedF1_loss(Y, P, self.aggregation)
        if self.name == "focal":
            return focal_loss(Y, P, self.gamma)
        return cross_entropy_loss(Y, P)

    def describe(self) -> str:
        """Compact one-line form used in checkpoints and reports."""
        if self.name == "sigmoidF1":
            return (f"sigmoidF1 beta={self.beta!r} eta={self.eta!r} "
                    f"scale={self.scale} aggregation={self.aggregation}")
        if self.name == "unboundedF1":
            return f"unboundedF1 aggregation={self.aggregation}"
        if self.name == "focal":
            return f"focal gamma={self.gamma!r}"
        return "cross_entropy"

    @classmethod
    def parse(cls, text: str) -> "LossSpec":
        name, *pairs = text.split()
        kwargs = {}
        for pair in pairs:
            key, _, value = pair.partition("=")
            kwargs[key] = value if key in ("scale", "aggregation") else float(value)
        return cls(name, **kwargs)
