import json

import pytest

from pgqr.config import CONFIG_FORMAT, ConfigError, RunConfig, load_config
from pgqr.trainer import TrainConfig


def test_defaults_are_materialised(tmp_path):
    cfg = RunConfig()
    cfg.save(tmp_path / "c.json")
    d = json.loads((tmp_path / "c.json").read_text())
    assert d["format"] == CONFIG_FORMAT
    assert d["pit_draws"] == 1000 and d["samples"] == 1000
    train = d["train"]
    assert train["epochs"] == 500 and train["alpha"] == 1.0
    assert train["pmnn"]["width"] == 256
    assert len(train["lambda_grid"]) == 100
    assert load_config(tmp_path / "c.json") == cfg


def test_partial_config_fills_defaults(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 7, "sims": ["Sim5"], "train": {"epochs": 3}}))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.seed == 7 and cfg.sims == ("5",) and cfg.train.epochs == 3
    assert cfg.samples == RunConfig().samples


@pytest.mark.parametrize("payload, pattern", [
    ({"format": "pgqr-config/0"}, "format"),
    ({"bogus": 1}, "unknown"),
    ({"split": [0.5, 0.5, 0.5]}, "split"),
    ({"level": 1.0}, "level"),
    ({"taus": [0.5, 0.1]}, "taus"),
    ({"train": {"epochs": 0}}, "epochs"),
    ({"sims": ["7"]}, "kind"),
])
def test_invalid_configs_are_rejected(tmp_path, payload, pattern):
    (tmp_path / "c.json").write_text(json.dumps(payload))
    with pytest.raises(ConfigError, match=pattern):
        load_config(tmp_path / "c.json")


def test_non_json_is_rejected(tmp_path):
    (tmp_path / "c.json").write_text("epochs: 3\n")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(tmp_path / "c.json")
    (tmp_path / "c.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")


def test_with_seed_reseeds_training():
    cfg = RunConfig(train=TrainConfig(seed=1), seed=1).with_seed(9)
    assert cfg.seed == 9 and cfg.train.seed == 9


def test_dumps_is_stable():
    assert RunConfig().dumps() == RunConfig.from_dict(json.loads(RunConfig().dumps())).dumps()
