"""Datasets: synthetic correlated multilabel data, a sparse text format, splits, batches.

Text format (UTF-8, one example per line, 0-based indices)::

    #dims <n> <C> <d>
    #classes <name_0> ... <name_{C-1}>        (optional)
    <label>[,<label>...]<TAB><feat>:<value> [<feat>:<value> ...]

The label field may be empty (an example without labels).  Feature entries
not listed are zero.  Other lines starting with ``#`` are comments.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import logistic, seeded_rng, standard_normal

log = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    def __init__(self, message, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    class_names: list = field(default_factory=list)
    provenance: str = ""
    empty_label_rows: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.int64)
        if self.X.ndim != 2 or self.Y.ndim != 2 or len(self.X) != len(self.Y):
            raise ValueError(f"inconsistent shapes X={self.X.shape}, Y={self.Y.shape}")
        if not np.all((self.Y == 0) | (self.Y == 1)):
            raise ValueError("labels must be binary")
        if not self.class_names:
            self.class_names = [f"c{j}" for j in range(self.Y.shape[1])]
        if len(self.class_names) != self.Y.shape[1]:
            raise ValueError("class_names length does not match label columns")

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return self.Y.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.Y[idx], list(self.class_names), self.provenance)

    def mean_label_count(self) -> float:
        return float(self.Y.sum(axis=1).mean())


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Labels come from ``sharpness * (score + offset)`` through a logistic and
    Bernoulli draw, so large ``sharpness`` makes them nearly deterministic
    functions of the latent vector; ``label_correlation`` is the share of
    score variance coming from a latent block shared by all classes.
    """

    n: int = 5000
    d: int = 32
    C: int = 10
    latent_dim: int = 8
    target_mean_label_count: float = 2.0
    label_correlation: float = 0.5
    noise_scale: float = 0.05
    sharpness: float = 30.0
    seed: int = 0

    def validate(self):
        for key in ("n", "d", "C", "latent_dim"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be >= 1, got {getattr(self, key)}")
        if not 0 < self.target_mean_label_count < self.C:
            raise ValueError(
                f"target_mean_label_count must lie in (0, C={self.C}), got {self.target_mean_label_count}"
            )
        if not 0 <= self.label_correlation <= 1:
            raise ValueError(f"label_correlation must lie in [0, 1], got {self.label_correlation}")
        if self.noise_scale < 0 or self.sharpness <= 0:
            raise ValueError("noise_scale must be >= 0 and sharpness > 0")


def _calibrate_offset(scores, sharpness, target, iters=20, tol=1e-3, lo=-10.0, hi=10.0):
    """Bisection for the shared offset whose expected label count per example hits ``target``."""
    def expected(shift):
        return logistic(sharpness * (scores + shift)).sum(axis=1).mean()

    mid = 0.5 * (lo + hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        value = expected(mid)
        if abs(value - target) < tol:
            break
        if value < target:
            lo = mid
        else:
            hi = mid
    return mid


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    cfg.validate()
    rng = seeded_rng(cfg.seed)
    n, C = cfg.n, cfg.C
    z_shared = standard_normal(rng, (n, cfg.latent_dim))
    z_private = standard_normal(rng, (n, C))
    directions = standard_normal(rng, (cfg.latent_dim, C))
    directions /= np.linalg.norm(directions, axis=0, keepdims=True)
    rho = cfg.label_correlation
    # unit-variance class scores; at rho=0 each class sees only its own latent coordinate
    scores = np.sqrt(rho) * (z_shared @ directions) + np.sqrt(1 - rho) * z_private
    class_offsets = 0.5 * standard_normal(rng, C)
    scores = scores + class_offsets + cfg.noise_scale * standard_normal(rng, (n, C))
    shift = _calibrate_offset(scores, cfg.sharpness, cfg.target_mean_label_count)
    Y = (rng.uniform(size=(n, C)) < logistic(cfg.sharpness * (scores + shift))).astype(np.int64)

    latent = np.hstack([z_shared, z_private])
    mixing = standard_normal(rng, (latent.shape[1], cfg.d)) / np.sqrt(latent.shape[1])
    X = latent @ mixing + cfg.noise_scale * standard_normal(rng, (n, cfg.d))
    provenance = "synthetic " + json.dumps(asdict(cfg), sort_keys=True)
    return Dataset(X, Y, provenance=provenance)


def save_multilabel_file(ds: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dims {ds.n} {ds.n_classes} {ds.n_features}\n")
        fh.write("#classes " + " ".join(ds.class_names) + "\n")
        for x, y in zip(ds.X, ds.Y):
            labels = ",".join(str(j) for j in np.flatnonzero(y))
            feats = " ".join(f"{k}:{float(x[k])!r}" for k in np.flatnonzero(x))
            fh.write(f"{labels}\t{feats}\n")


def load_multilabel_file(path) -> Dataset:
    path = Path(path)
    dims = None
    class_names = None
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if line.startswith("#"):
                head, *rest = line[1:].split() or [""]
                if head == "dims":
                    if len(rest) != 3:
                        raise DatasetFormatError("header must read '#dims n C d'", path, lineno)
                    try:
                        dims = tuple(int(v) for v in rest)
                    except ValueError:
                        raise DatasetFormatError(f"non-integer dims {rest}", path, lineno) from None
                elif head == "classes":
                    class_names = rest
                continue
            if not line:
                continue
            if dims is None:
                raise DatasetFormatError("data line before '#dims' header", path, lineno)
            rows.append((lineno, line))
    if dims is None:
        raise DatasetFormatError("missing '#dims n C d' header", path)
    n, C, d = dims
    if len(rows) != n:
        raise DatasetFormatError(f"header declares {n} examples, found {len(rows)}", path)
    X = np.zeros((n, d))
    Y = np.zeros((n, C), dtype=np.int64)
    empty = 0
    for i, (lineno, line) in enumerate(rows):
        if "\t" not in line:
            raise DatasetFormatError("expected '<labels>\\t<features>'", path, lineno)
        label_field, feat_field = line.split("\t", 1)
        if label_field.strip():
            for token in label_field.split(","):
                token = token.strip()
                if not token.isdigit() or int(token) >= C:
                    raise DatasetFormatError(f"unknown class token {token!r} (C={C})", path, lineno)
                Y[i, int(token)] = 1
        else:
            empty += 1
        for item in feat_field.split():
            key, sep, value = item.partition(":")
            if not sep or not key.isdigit():
                raise DatasetFormatError(f"malformed feature entry {item!r}", path, lineno)
            k = int(key)
            if k >= d:
                raise DatasetFormatError(f"feature index {k} out of declared range [0, {d})", path, lineno)
            try:
                X[i, k] = float(value)
            except ValueError:
                raise DatasetFormatError(f"malformed feature value {value!r}", path, lineno) from None
            if not np.isfinite(X[i, k]):
                raise DatasetFormatError(f"non-finite feature value {value!r}", path, lineno)
    if empty:
        log.warning("%s: %d example(s) with an empty label field", path, empty)
    if class_names is not None and len(class_names) != C:
        raise DatasetFormatError(f"'#classes' lists {len(class_names)} names, expected {C}", path)
    return Dataset(X, Y, class_names or [], provenance=f"file {path}", empty_label_rows=empty)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k).tolist() for k in ("train", "val", "test")}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitIndices":
        obj = json.loads(text)
        return cls(*(np.asarray(obj[k], dtype=np.int64) for k in ("train", "val", "test")))


def split_indices(n: int, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> SplitIndices:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"n={n} is too small for non-empty splits with fractions {fractions}")
    perm = seeded_rng(seed).permutation(n)
    return SplitIndices(
        np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]), np.sort(perm[n_train + n_val:])
    )


def split(ds: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0, indices: Optional[SplitIndices] = None):
    idx = indices if indices is not None else split_indices(ds.n, fractions, seed)
    return ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test)


def batch_indices(n: int, batch_size: int, epoch_seed) -> list:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = seeded_rng(epoch_seed).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def batches(ds: Dataset, batch_size: int, epoch_seed) -> list:
    """One epoch of ``(X, Y)`` minibatches in a shuffled order."""
    return [(ds.X[idx], ds.Y[idx]) for idx in batch_indices(ds.n, batch_size, epoch_seed)]
