"""Hard-thresholded confusion counts and evaluation metrics.

Conventions: a score equal to the threshold counts as a positive prediction;
every ratio has ``EPS`` added to its denominator so empty classes score 0
instead of NaN; average precision is the uninterpolated mean of precision at
the rank of each positive.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

EPS = 1e-16
MODES = ("micro", "macro", "weighted")


class EmptySupportWarning(UserWarning):
    """Raised (as a warning) when an aggregate is requested over zero support."""


def _check_pair(Y, P):
    Y = np.asarray(Y)
    P = np.asarray(P, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if P.ndim == 1:
        P = P[:, None]
    if Y.shape != P.shape:
        raise ValueError(f"label matrix shape {Y.shape} does not match score matrix shape {P.shape}")
    if not np.all((Y == 0) | (Y == 1)):
        raise ValueError("label matrix must be binary")
    return Y.astype(np.int64), P


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class integer counts; each field has one entry per class."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.tp)

    @property
    def support(self) -> np.ndarray:
        return self.tp + self.fn

    def total(self) -> "ConfusionCounts":
        """Counts pooled over classes (a single-class ``ConfusionCounts``)."""
        return ConfusionCounts(*(np.array([a.sum()]) for a in (self.tp, self.fp, self.fn, self.tn)))

    def __getitem__(self, j):
        return ConfusionCounts(*(np.atleast_1d(a[j]) for a in (self.tp, self.fp, self.fn, self.tn)))


def hard_confusion(Y, P, t: float = 0.5) -> ConfusionCounts:
    if not np.isfinite(t):
        raise ValueError("threshold must be finite")
    Y, P = _check_pair(Y, P)
    pred = (P >= t).astype(np.int64)
    tp = (pred * Y).sum(axis=0)
    fp = (pred * (1 - Y)).sum(axis=0)
    fn = ((1 - pred) * Y).sum(axis=0)
    tn = ((1 - pred) * (1 - Y)).sum(axis=0)
    return ConfusionCounts(tp, fp, fn, tn)


def prf_from_counts(c: ConfusionCounts):
    """Per-class (precision, recall, F1) arrays."""
    tp, fp, fn = (np.asarray(a, dtype=np.float64) for a in (c.tp, c.fp, c.fn))
    precision = tp / (tp + fp + EPS)
    recall = tp / (tp + fn + EPS)
    f1 = 2 * tp / (2 * tp + fn + fp + EPS)
    return precision, recall, f1


_METRIC_INDEX = {"precision": 0, "recall": 1, "f1": 2}


def aggregate(counts: ConfusionCounts, supports=None, mode: str = "macro", metric: str = "f1") -> float:
    """Aggregate a per-class metric over classes.

    ``micro`` recomputes the metric from counts pooled over classes, ``macro``
    is the unweighted class mean and ``weighted`` weights each class by its
    ground-truth support.  Zero total support returns 0.0 and emits an
    :class:`EmptySupportWarning`.
    """
    if mode not in MODES:
        raise ValueError(f"unknown aggregation mode {mode!r}; expected one of {MODES}")
    k = _METRIC_INDEX[metric]
    supports = counts.support if supports is None else np.asarray(supports, dtype=np.float64)
    total_support = float(np.sum(supports))
    if total_support == 0:
        warnings.warn("aggregate over classes with zero total support", EmptySupportWarning, stacklevel=2)
        return 0.0
    if mode == "micro":
        return float(prf_from_counts(counts.total())[k][0])
    per_class = prf_from_counts(counts)[k]
    if mode == "macro":
        return float(np.mean(per_class))
    return float(np.sum(per_class * supports) / total_support)


def average_precision(y_col, score_col) -> float:
    """AP of one class, or NaN when the class has no positives."""
    y = np.asarray(y_col).astype(np.int64).ravel()
    s = np.asarray(score_col, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise ValueError("label and score columns differ in length")
    n_pos = int(y.sum())
    if n_pos == 0:
        return float("nan")
    # stable sort of negated scores == descending, ties by ascending index
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    ranks = np.arange(1, len(y) + 1)
    precision_at = np.cumsum(hits) / ranks
    return float(precision_at[hits == 1].sum() / n_pos)


def mean_ap(Y, S):
    """Return ``(mAP, per_class_ap, n_excluded)``; all-negative classes are excluded."""
    Y, S = _check_pair(Y, S)
    ap = np.array([average_precision(Y[:, j], S[:, j]) for j in range(Y.shape[1])])
    valid = ~np.isnan(ap)
    n_excluded = int((~valid).sum())
    value = float(ap[valid].mean()) if valid.any() else 0.0
    return value, ap, n_excluded


@dataclass
class MetricReport:
    threshold: float
    precision_per_class: np.ndarray
    recall_per_class: np.ndarray
    f1_per_class: np.ndarray
    support: np.ndarray
    microF1: float
    macroF1: float
    weightedF1: float
    precision: float
    recall: float
    mAP: float
    ap_excluded: int = 0
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        """Flat key-value form; per-class values are suffixed with the class index."""
        rec = {
            "threshold": float(self.threshold),
            "weightedF1": self.weightedF1,
            "microF1": self.microF1,
            "macroF1": self.macroF1,
            "precision": self.precision,
            "recall": self.recall,
            "mAP": self.mAP,
            "ap_excluded": self.ap_excluded,
        }
        for j in range(len(self.f1_per_class)):
            rec[f"f1_{j}"] = float(self.f1_per_class[j])
            rec[f"precision_{j}"] = float(self.precision_per_class[j])
            rec[f"recall_{j}"] = float(self.recall_per_class[j])
            rec[f"support_{j}"] = int(self.support[j])
        rec.update(self.extra)
        return rec


def evaluate(Y, S, t: float = 0.5) -> MetricReport:
    """Full metric report for scores ``S`` at threshold ``t``.

    ``precision`` and ``recall`` in the report are micro-averaged; mAP uses
    the raw scores and is independent of ``t``.
    """
    Y, S = _check_pair(Y, S)
    counts = hard_confusion(Y, S, t)
    p, r, f1 = prf_from_counts(counts)
    support = counts.support
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptySupportWarning)
        micro = aggregate(counts, support, "micro")
        macro = aggregate(counts, support, "macro")
        weighted = aggregate(counts, support, "weighted")
        precision = aggregate(counts, support, "micro", "precision")
        recall = aggregate(counts, support, "micro", "recall")
    m_ap, _, excluded = mean_ap(Y, S)
    return MetricReport(
        threshold=float(t),
        precision_per_class=p,
        recall_per_class=r,
        f1_per_class=f1,
        support=support,
        microF1=micro,
        macroF1=macro,
        weightedF1=weighted,
        precision=precision,
        recall=recall,
        mAP=m_ap,
        ap_excluded=excluded,
    )
