"""Experiment configuration: typed dataclass sections stored as an INI file.

Every setting has a dotted name ``section.key`` (``train.lr``,
``sigmoidF1.beta``); overrides use the same names.  Tuples are written
comma-separated.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import typing
from dataclasses import dataclass, field

from .data import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    path: str = ""  # empty means synthetic
    n: int = 5000
    d: int = 32
    C: int = 10
    latent_dim: int = 8
    mean_label_count: float = 2.0
    label_correlation: float = 0.5
    noise_scale: float = 0.01
    sharpness: float = 1000.0
    seed: int = 0
    split: tuple[float, ...] = (0.8, 0.1, 0.1)
    split_seed: int = 0

    def synth(self) -> SynthConfig:
        return SynthConfig(
            n=self.n, d=self.d, C=self.C, latent_dim=self.latent_dim,
            target_mean_label_count=self.mean_label_count,
            label_correlation=self.label_correlation,
            noise_scale=self.noise_scale, sharpness=self.sharpness, seed=self.seed,
        )


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    optimizer: str = "adam"
    lr: float = 0.01


@dataclass(frozen=True)
class SigmoidF1Config:
    beta: float = 1.0
    eta: float = 0.0
    scale: str = "prob"
    aggregation: str = "macro"


@dataclass(frozen=True)
class UnboundedF1Config:
    aggregation: str = "macro"


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = (0.5, 0.05)
    bounding: str = "logistic"


@dataclass(frozen=True)
class RunConfig:
    losses: tuple[str, ...] = ("sigmoidF1", "cross_entropy")
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "runs"


@dataclass(frozen=True)
class GridConfig:
    betas: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0, 30.0)
    etas: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    metric: str = "weightedF1"
    threshold: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sigmoidF1: SigmoidF1Config = field(default_factory=SigmoidF1Config)
    unboundedF1: UnboundedF1Config = field(default_factory=UnboundedF1Config)
    focal: FocalConfig = field(default_factory=FocalConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunConfig = field(default_factory=RunConfig)
    grid: GridConfig = field(default_factory=GridConfig)

    def validate(self) -> "ExperimentConfig":
        from .losses import LossSpec

        if not self.run.losses:
            raise ConfigError("run.losses: at least one loss is required")
        if not self.run.seeds:
            raise ConfigError("run.seeds: at least one seed is required")
        if not self.eval.thresholds:
            raise ConfigError("eval.thresholds: at least one threshold is required")
        for name in self.run.losses:
            try:
                LossSpec(name)
            except ValueError as err:
                raise ConfigError(f"run.losses: {err}") from None
        if self.train.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"train.optimizer: expected 'adam' or 'sgd', got {self.train.optimizer!r}")
        if self.eval.bounding not in ("logistic", "softmax"):
            raise ConfigError(f"eval.bounding: expected 'logistic' or 'softmax', got {self.eval.bounding!r}")
        if self.train.batch_size < 1:
            raise ConfigError("train.batch_size: must be >= 1")
        if self.train.epochs < 0:
            raise ConfigError("train.epochs: must be >= 0")
        if self.model.hidden < 1:
            raise ConfigError("model.hidden: must be >= 1")
        if self.sigmoidF1.scale not in ("prob", "logit"):
            raise ConfigError(f"sigmoidF1.scale: expected 'prob' or 'logit', got {self.sigmoidF1.scale!r}")
        for section in ("sigmoidF1", "unboundedF1"):
            if getattr(self, section).aggregation not in ("macro", "micro"):
                raise ConfigError(f"{section}.aggregation: expected 'macro' or 'micro'")
        if len(self.data.split) != 3 or min(self.data.split) <= 0 or abs(sum(self.data.split) - 1) > 1e-9:
            raise ConfigError("data.split: expected three positive fractions summing to 1")
        if not self.data.path:
            if not 0 < self.data.mean_label_count < self.data.C:
                raise ConfigError(
                    f"data.mean_label_count: must lie in (0, data.C={self.data.C}), got {self.data.mean_label_count}"
                )
            try:
                self.data.synth().validate()
            except ValueError as err:
                raise ConfigError(f"data: {err}") from None
        return self

    def training_hash(self) -> str:
        """Digest of the settings that determine trained parameters."""
        keep = ("data", "model", "train", "sigmoidF1", "unboundedF1", "focal")
        text = "".join(f"{k}={_format(getattr(getattr(self, s), k))}\n"
                       for s in keep for k in _hints(type(getattr(self, s))))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def hash(self) -> str:
        """Digest of every setting except ``run.output_dir``."""
        neutral = replace(self, {"run.output_dir": ""})
        return hashlib.sha256(to_text(neutral).encode("utf-8")).hexdigest()[:16]


def _sections(cfg: ExperimentConfig):
    for f in dataclasses.fields(cfg):
        yield f.name, getattr(cfg, f.name)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(key: str, text: str, typ):
    text = text.strip()
    try:
        if typing.get_origin(typ) is tuple:
            (inner, _) = typing.get_args(typ)
            if not text:
                return ()
            return tuple(_parse(key, part, inner) for part in text.split(","))
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {getattr(typ, '__name__', typ)}") from None


def _hints(section_cls):
    return typing.get_type_hints(section_cls)


def known_keys() -> list:
    keys = []
    for name, section in _sections(ExperimentConfig()):
        keys.extend(f"{name}.{f.name}" for f in dataclasses.fields(section))
    return keys


def replace(cfg: ExperimentConfig, values: dict) -> ExperimentConfig:
    """Return ``cfg`` with dotted-key ``values`` (already typed or as strings) applied."""
    updates: dict = {}
    for key, value in values.items():
        section, _, name = key.partition(".")
        if not name or not hasattr(cfg, section) or name not in _hints(type(getattr(cfg, section))):
            raise ConfigError(f"unknown config key {key!r}")
        typ = _hints(type(getattr(cfg, section)))[name]
        if isinstance(value, str) and typ is not str:
            value = _parse(key, value, typ)
        updates.setdefault(section, {})[name] = value
    new_sections = {
        section: dataclasses.replace(getattr(cfg, section), **fields) for section, fields in updates.items()
    }
    return dataclasses.replace(cfg, **new_sections)


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        out[key.strip()] = value.strip()
    return out


def to_text(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, section in _sections(cfg):
        parser[name] = {f.name: _format(getattr(section, f.name)) for f in dataclasses.fields(section)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def from_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed config file: {err}") from None
    values = {f"{s}.{k}": v for s in parser.sections() for k, v in parser[s].items()}
    values.update(overrides or {})
    return replace(ExperimentConfig(), values).validate()


def load(path=None, overrides: dict | None = None) -> ExperimentConfig:
    text = ""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return from_text(text, overrides)


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_text(cfg))
