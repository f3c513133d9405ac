"""Two-layer classification head trained by minibatch gradient descent.

features -> ReLU(X W1 + b1) -> linear logits -> logistic probabilities.
"""
from __future__ import annotations

import io
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .core import logistic, seeded_rng, softmax, standard_normal
from .data import batch_indices
from .losses import LossSpec

PARAM_NAMES = ("W1", "b1", "W2", "b2")
CHECKPOINT_MAGIC = "#sigmoidf1-checkpoint v1"


class NonFiniteError(RuntimeError):
    """A loss, gradient or parameter stopped being finite."""


class CheckpointError(ValueError):
    pass


@dataclass
class HeadModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    seed: int = 0

    @property
    def dims(self):
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    def params(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def replace(self, **params) -> "HeadModel":
        base = self.params()
        base.update(params)
        return HeadModel(**base, seed=self.seed)

    def copy(self) -> "HeadModel":
        return self.replace(**{k: v.copy() for k, v in self.params().items()})


def init_head(d_in: int, d_hidden: int, n_classes: int, seed: int = 0) -> HeadModel:
    """Normal weights scaled by ``1/sqrt(fan_in)``, zero biases."""
    if min(d_in, d_hidden, n_classes) < 1:
        raise ValueError("all head dimensions must be >= 1")
    rng = seeded_rng(seed)
    W1 = standard_normal(rng, (d_in, d_hidden)) / np.sqrt(d_in)
    W2 = standard_normal(rng, (d_hidden, n_classes)) / np.sqrt(d_hidden)
    return HeadModel(W1, np.zeros(d_hidden), W2, np.zeros(n_classes), seed=seed)


@dataclass
class Forward:
    X: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def forward(m: HeadModel, X) -> Forward:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.W1.shape[0]:
        raise ValueError(f"expected input with {m.W1.shape[0]} columns, got shape {X.shape}")
    pre = X @ m.W1 + m.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ m.W2 + m.b2
    return Forward(X, pre, hidden, logits, logistic(logits))


def backward(m: HeadModel, cache: Forward, d_probs=None, d_logits=None) -> dict:
    """Parameter gradients from an upstream gradient on probabilities or logits."""
    if (d_probs is None) == (d_logits is None):
        raise ValueError("pass exactly one of d_probs or d_logits")
    if d_logits is None:
        d_logits = np.asarray(d_probs) * cache.probs * (1.0 - cache.probs)
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.shape != cache.logits.shape:
        raise ValueError(f"upstream gradient shape {d_logits.shape} != output shape {cache.logits.shape}")
    dW2 = cache.hidden.T @ d_logits
    db2 = d_logits.sum(axis=0)
    d_pre = (d_logits @ m.W2.T) * (cache.pre > 0)
    dW1 = cache.X.T @ d_pre
    db1 = d_pre.sum(axis=0)
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def loss_and_grads(m: HeadModel, X, Y, loss: LossSpec):
    cache = forward(m, X)
    if loss.consumes == "logit":
        value = loss(Y, cache.logits)
        grads = backward(m, cache, d_logits=value.grad)
    else:
        value = loss(Y, cache.probs)
        grads = backward(m, cache, d_probs=value.grad)
    return value, grads


@dataclass
class Optimizer:
    """Plain SGD or bias-corrected Adam over the head's parameters."""

    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.kind!r}")

    def step(self, model: HeadModel, grads: dict) -> HeadModel:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for {name} at step {self.t + 1}")
        self.t += 1
        new = {}
        for name, theta in model.params().items():
            g = grads[name]
            if self.kind == "sgd":
                new[name] = theta - self.lr * g
                continue
            m = self.beta1 * self.m.get(name, np.zeros_like(theta)) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(name, np.zeros_like(theta)) + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            new[name] = theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return model.replace(**new)


def train(m: HeadModel, X, Y, loss: LossSpec, opt: Optimizer, epochs: int, batch_size: int = 256, seed: int = 0):
    """Train for ``epochs`` passes; returns ``(model, per-step loss trace)``.

    Each epoch draws a fresh permutation from the stream seeded by
    ``(seed, epoch)``.  A non-finite loss raises :class:`NonFiniteError`
    whose ``trace`` attribute holds the losses recorded so far.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    trace = []
    for epoch in range(epochs):
        for idx in batch_indices(len(X), batch_size, (seed, epoch)):
            value, grads = loss_and_grads(m, X[idx], Y[idx], loss)
            if not np.isfinite(value.loss):
                err = NonFiniteError(f"non-finite loss at epoch {epoch}")
                err.trace = trace
                raise err
            trace.append(value.loss)
            try:
                m = opt.step(m, grads)
            except NonFiniteError as err:
                err.trace = trace
                raise
    return m, trace


def predict_scores(m: HeadModel, X, bounding: str = "logistic") -> np.ndarray:
    """Bounded scores; ``softmax`` normalises across classes (degenerate for one class)."""
    logits = forward(m, X).logits
    if bounding == "logistic":
        return logistic(logits)
    if bounding == "softmax":
        return softmax(logits, axis=1)
    raise ValueError(f"bounding must be 'logistic' or 'softmax', got {bounding!r}")


def predict(m: HeadModel, X, t: float = 0.5, bounding: str = "logistic") -> np.ndarray:
    return (predict_scores(m, X, bounding) >= t).astype(np.int64)


def save_checkpoint(m: HeadModel, path, loss: LossSpec | None = None) -> None:
    """Write a text checkpoint: header, row-major parameter blocks, sha256 trailer."""
    d_in, d_hidden, n_classes = m.dims
    buf = io.StringIO()
    buf.write(f"{CHECKPOINT_MAGIC}\n")
    buf.write(f"dims {d_in} {d_hidden} {n_classes}\n")
    buf.write(f"seed {m.seed}\n")
    buf.write(f"loss {loss.describe() if loss is not None else 'none'}\n")
    for name in PARAM_NAMES:
        arr = np.atleast_2d(getattr(m, name))
        buf.write(f"{name} {' '.join(str(s) for s in getattr(m, name).shape)}\n")
        for row in arr:
            buf.write(" ".join(repr(float(x)) for x in row) + "\n")
    body = buf.getvalue()
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(body)
        fh.write(f"sha256 {digest}\n")


def load_checkpoint(path):
    """Return ``(model, loss_spec_or_None)``; raises :class:`CheckpointError` on corruption."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    body, sep, trailer = text.rpartition("sha256 ")
    if not sep or hashlib.sha256(body.encode("utf-8")).hexdigest() != trailer.strip():
        raise CheckpointError(f"checkpoint {path}: checksum mismatch (file is corrupt or truncated)")
    lines = body.splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"checkpoint {path}: bad header")
    d_in, d_hidden, n_classes = (int(x) for x in lines[1].split()[1:])
    seed = int(lines[2].split()[1])
    loss_text = lines[3].split(" ", 1)[1]
    loss = None if loss_text == "none" else LossSpec.parse(loss_text)
    params = {}
    pos = 4
    for name in PARAM_NAMES:
        header = lines[pos].split()
        if header[0] != name:
            raise CheckpointError(f"checkpoint {path}: expected block {name}, found {header[0]}")
        shape = tuple(int(s) for s in header[1:])
        n_rows = shape[0] if len(shape) == 2 else 1
        rows = [[float(x) for x in lines[pos + 1 + r].split()] for r in range(n_rows)]
        params[name] = np.array(rows, dtype=np.float64).reshape(shape)
        pos += 1 + n_rows
    m = HeadModel(**params, seed=seed)
    if m.dims != (d_in, d_hidden, n_classes):
        raise CheckpointError(f"checkpoint {path}: parameter shapes disagree with header dims")
    return m, loss
