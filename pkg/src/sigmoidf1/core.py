"""Dense numerical kernel shared by every other module.

All arrays are float64 numpy arrays.  Randomness goes through numpy's
PCG64 bit generator, seeded directly from an unsigned integer (or a tuple of
them, via ``SeedSequence``), so a seed names the same stream everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int]]


@dataclass(frozen=True)
class SigmoidParams:
    """Slope ``beta`` and offset ``eta`` of ``S(u) = 1 / (1 + exp(-beta (u + eta)))``."""

    beta: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and np.isfinite(self.eta)):
            raise ValueError(f"sigmoid parameters must be finite, got beta={self.beta}, eta={self.eta}")


def logistic(z):
    """Numerically stable logistic function, element-wise."""
    z = np.asarray(z, dtype=np.float64)
    # exp of a non-positive argument only: no overflow for any finite z
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_param(u, params: SigmoidParams):
    """Evaluate ``S(u; beta, eta)`` element-wise."""
    u = np.asarray(u, dtype=np.float64)
    return logistic(params.beta * (u + params.eta))


def sigmoid_param_grad(u, params: SigmoidParams):
    """Derivative ``dS/du = beta * S * (1 - S)``.

    Evaluated as ``beta * e / (1 + e)**2`` with ``e = exp(-|z|)``; forming
    ``1 - S`` directly loses all precision once the sigmoid saturates.
    """
    z = params.beta * (np.asarray(u, dtype=np.float64) + params.eta)
    e = np.exp(-np.abs(z))
    return params.beta * e / (1.0 + e) ** 2


def softmax(v, axis: int = -1):
    """Softmax along ``axis`` (the last one by default); shift-invariant."""
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def finite_diff_grad(f: Callable, x, h=1e-5):
    """Central-difference gradient of a scalar function ``f`` at ``x``.

    ``x`` may be any numpy array.  An ``object`` array of ``decimal.Decimal``
    (with ``h`` a Decimal too) evaluates the differences in extended
    precision, which keeps the roundoff term far below the truncation term
    when the gradient itself is tiny.
    """
    if not h > 0:
        raise ValueError("step size h must be positive")
    x = np.array(x, copy=True, dtype=object if np.asarray(x).dtype == object else np.float64)
    grad = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        f_plus = f(x)
        x[idx] = orig - h
        f_minus = f(x)
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2 * h)
    return grad


def max_relative_error(analytic, numeric) -> float:
    """Largest element-wise ``|a - n| / max(|a|, |n|)``, with 0/0 counted as 0."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a), np.abs(n))
    diff = np.abs(a - n)
    rel = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    return float(rel.max()) if rel.size else 0.0


def seeded_rng(seed: SeedLike) -> np.random.Generator:
    """PCG64 generator for ``seed``; a tuple seeds a derived, independent stream."""
    if isinstance(seed, (int, np.integer)):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        return np.random.Generator(np.random.PCG64(int(seed)))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(s) for s in seed])))


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape, dtype=np.float64)


def uniform(rng: np.random.Generator, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    return rng.uniform(low, high, size=shape)
