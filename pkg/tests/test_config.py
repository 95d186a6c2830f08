import json

import pytest

from sfnet.config import ModelConfig, Settings, TrainConfig
from sfnet.errors import ConfigurationError
from sfnet.tensor.core import Precision


def test_defaults():
    s = Settings.build({})
    assert s.model.patch_size == 11
    assert s.model.pca_components == 30
    assert s.model.token_dim == 64
    assert s.model.stb_depth == 3
    assert s.model.paper_literal_eq8 is False
    assert s.train.train_fraction == 0.1
    assert s.train.epochs == 30
    assert s.model.precision is Precision.STANDARD


def test_model_n_tokens():
    assert ModelConfig(patch_size=5).n_tokens == 25


def test_yaml_file_with_env_vars(tmp_path, monkeypatch):
    monkeypatch.setenv("SCENE_EPOCHS", "4")
    path = tmp_path / "cfg.yaml"
    path.write_text("seed: 3\ntrain:\n  epochs: ${SCENE_EPOCHS}\nmodel:\n  patch_size: 5\n")
    s = Settings.from_file(str(path))
    assert s.train.epochs == 4
    assert s.model.patch_size == 5
    assert s.model.seed == s.train.seed == s.synth.seed == 3


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigurationError, match="nope"):
        Settings.build({"model": {"nope": 1}})


def test_malformed_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("model: [unclosed\n")
    with pytest.raises(ConfigurationError):
        Settings.from_file(str(path))
    path.write_text("- a list\n")
    with pytest.raises(ConfigurationError):
        Settings.from_file(str(path))


@pytest.mark.parametrize(
    "data",
    [
        {"model": {"patch_size": 4}},
        {"model": {"n_classes": 1}},
        {"model": {"stb_depth": 2}},
        {"model": {"alphas": [0.5, 1.5]}},
        {"train": {"train_fraction": 0.95}},
        {"train": {"batch_size": 0}},
        {"train": {"learning_rate": -1.0}},
    ],
)
def test_invalid_values(data):
    with pytest.raises(ConfigurationError):
        Settings.build(data)


def test_depth_override():
    s = Settings.build({"model": {"stb_depth": 1, "allow_depth_override": True}})
    assert s.model.stb_depth == 1


def test_merged_overrides_skip_none():
    base = Settings.build({"train": {"epochs": 5}})
    merged = base.merged({"train": {"epochs": None, "batch_size": 2}, "precision": "verification"})
    assert merged.train.epochs == 5
    assert merged.train.batch_size == 2
    assert merged.model.precision is Precision.VERIFICATION
    assert base.train.batch_size == 16


def test_effective_json_is_sorted_and_complete():
    data = json.loads(Settings.build({"seed": 9}).effective_json())
    assert data["model"]["seed"] == 9
    assert set(data) >= {"model", "train", "synth", "bench"}
    assert list(data) == sorted(data)


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("SFNET_SEED", "21")
    monkeypatch.setenv("SFNET_TRAIN__EPOCHS", "2")
    s = Settings.build({})
    assert s.train.epochs == 2
    assert s.model.seed == 21


def test_train_config_is_standalone():
    assert TrainConfig(epochs=1).checkpoint_path == ""
