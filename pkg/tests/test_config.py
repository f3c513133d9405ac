import pytest

from sigmoidf1 import config as config_mod
from sigmoidf1.config import ConfigError, ExperimentConfig


def test_defaults_validate():
    cfg = ExperimentConfig().validate()
    assert cfg.train.batch_size == 256 and cfg.run.seeds == (0, 1, 2, 3, 4)
    assert cfg.eval.thresholds == (0.5, 0.05)


def test_round_trip_text():
    cfg = config_mod.replace(ExperimentConfig(), {
        "train.lr": 0.1 + 0.2, "run.losses": ("focal", "unboundedF1"), "data.split": (0.7, 0.2, 0.1),
        "sigmoidF1.scale": "logit", "eval.thresholds": (0.25,), "data.path": "x y.txt",
    })
    back = config_mod.from_text(config_mod.to_text(cfg))
    assert back == cfg
    assert config_mod.to_text(back) == config_mod.to_text(cfg)


def test_round_trip_file(tmp_path):
    cfg = config_mod.replace(ExperimentConfig(), {"grid.betas": (3.0,), "grid.etas": (0.0, 0.25)})
    config_mod.save(cfg, tmp_path / "c.ini")
    assert config_mod.load(tmp_path / "c.ini") == cfg


def test_overrides_win_over_file(tmp_path):
    (tmp_path / "c.ini").write_text("[train]\nepochs = 7\nlr = 0.5\n")
    cfg = config_mod.load(tmp_path / "c.ini", config_mod.parse_overrides(["train.epochs=3"]))
    assert cfg.train.epochs == 3 and cfg.train.lr == 0.5


def test_overrides_parse_types():
    cfg = config_mod.replace(ExperimentConfig(), config_mod.parse_overrides(["run.seeds=4, 5", "data.n = 100"]))
    assert cfg.run.seeds == (4, 5) and cfg.data.n == 100


@pytest.mark.parametrize("key", ["train.epoch", "nosuch.key", "train", "model.hidden.size"])
def test_unknown_keys_rejected(key):
    with pytest.raises(ConfigError, match="unknown config key"):
        config_mod.replace(ExperimentConfig(), {key: "1"})


def test_unknown_key_in_file():
    with pytest.raises(ConfigError, match="train.steps"):
        config_mod.from_text("[train]\nsteps = 3\n")


def test_malformed_override():
    with pytest.raises(ConfigError, match="key=value"):
        config_mod.parse_overrides(["train.epochs"])


@pytest.mark.parametrize("pair,key", [
    ("train.epochs=abc", "train.epochs"),
    ("run.losses=", "run.losses"),
    ("run.losses=hinge", "run.losses"),
    ("train.optimizer=rmsprop", "train.optimizer"),
    ("data.mean_label_count=11", "data.mean_label_count"),
    ("data.split=0.5, 0.5", "data.split"),
    ("eval.bounding=tanh", "eval.bounding"),
    ("sigmoidF1.scale=raw", "sigmoidF1.scale"),
    ("train.batch_size=0", "train.batch_size"),
])
def test_invalid_values_name_the_key(pair, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        config_mod.from_text("", config_mod.parse_overrides([pair]))


def test_reserved_loss_refused():
    with pytest.raises(NotImplementedError):
        config_mod.from_text("", {"run.losses": "ASL"})


def test_hashes():
    a = ExperimentConfig()
    b = config_mod.replace(a, {"run.output_dir": "elsewhere"})
    c = config_mod.replace(a, {"eval.thresholds": (0.5,)})
    d = config_mod.replace(a, {"train.lr": 0.5})
    assert a.hash() == b.hash() != c.hash()
    assert a.training_hash() == c.training_hash() != d.training_hash()


def test_known_keys():
    keys = config_mod.known_keys()
    assert "sigmoidF1.beta" in keys and "data.sharpness" in keys and len(keys) == len(set(keys))
