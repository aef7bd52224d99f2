"""Tests for run configuration loading."""

import json

import pytest

from tagad.config import PRESETS, RunConfig, load_config, read_mapping, save_config
from tagad.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    """Write a config mapping to a file with the given suffix."""
    def _write(content: str, filename: str = "config.json"):
        path = tmp_path / filename
        path.write_text(content)
        return path
    return _write


def test_defaults():
    config = RunConfig()
    assert config.tau == 0.07
    assert config.gamma == 0.01
    assert config.batch_size == 128
    assert config.rounds == 256
    assert config.d_in == 768
    assert config.scoring_batch_size == 128
    assert config.seed == 0


def test_json_file(config_file):
    path = config_file(json.dumps({"tau": 0.1, "epochs": 3, "views": "cross"}))
    config = load_config(path)
    assert config.tau == 0.1
    assert config.epochs == 3
    assert config.views == "cross"


def test_yaml_file_coerces_scientific_notation(config_file):
    """Test that YAML's string-typed 2e-5 is accepted as a float."""
    path = config_file("learning_rate: 2e-5\nsymmetric_views: true\nmax_neighbors: 20\n", "run.yaml")
    config = load_config(path)
    assert config.learning_rate == pytest.approx(2e-5)
    assert config.symmetric_views is True
    assert config.max_neighbors == 20


def test_unknown_key_rejected(config_file):
    path = config_file(json.dumps({"tau": 0.1, "temperature": 0.2}))
    with pytest.raises(ConfigError, match="Unknown key.*temperature"):
        load_config(path)


def test_wrong_type_rejected(config_file):
    path = config_file(json.dumps({"epochs": "many"}))
    with pytest.raises(ConfigError, match="epochs"):
        load_config(path)


def test_fractional_int_rejected(config_file):
    path = config_file(json.dumps({"batch_size": 2.5}))
    with pytest.raises(ConfigError, match="batch_size"):
        load_config(path)


def test_invalid_json(config_file):
    path = config_file("{not json")
    with pytest.raises(ConfigError, match="Invalid config file"):
        load_config(path)


def test_non_mapping_rejected(config_file):
    path = config_file("- 1\n- 2\n", "list.yaml")
    with pytest.raises(ConfigError, match="mapping"):
        read_mapping(path)


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"tau": 0.0}, "tau"),
        ({"batch_size": 1}, "batch_size"),
        ({"text_width": 10, "text_heads": 4}, "divisible"),
        ({"views": "sideways"}, "views"),
        ({"estimator": "median"}, "estimator"),
        ({"anomaly_count": 6}, "multiple of 4"),
        ({"clique_size": 1}, "clique_size"),
        ({"seed": -1}, "seed"),
    ],
)
def test_validation(changes, message):
    with pytest.raises(ConfigError, match=message):
        RunConfig(**changes)


def test_precedence_preset_file_overrides(config_file):
    """Test that defaults < preset < file < overrides."""
    path = config_file(json.dumps({"epochs": 5}))
    config = load_config(path, preset="photo", overrides={"seed": 9})

    assert config.learning_rate == PRESETS["photo"]["learning_rate"]
    assert config.gamma == PRESETS["photo"]["gamma"]
    assert config.epochs == 5
    assert config.seed == 9


def test_unknown_preset():
    with pytest.raises(ConfigError, match="Unknown preset"):
        load_config(preset="cora")


def test_full_size_encoder_preset():
    config = load_config(preset="paper-encoder")
    assert (config.text_layers, config.text_width, config.text_heads) == (12, 512, 8)


def test_save_and_reload(tmp_path):
    config = RunConfig(gamma=0.5, anomaly_count=24, score_batch_size=64)
    save_config(config, tmp_path / "config.json")
    assert load_config(tmp_path / "config.json") == config


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="Cannot read"):
        load_config(tmp_path / "absent.json")
