import json

import pytest

from msda_few.config import RunConfig, from_dict, load_config, to_dict
from msda_few.exceptions import ConfigError


def test_defaults_round_trip():
    cfg = RunConfig()
    again = from_dict(RunConfig, json.loads(json.dumps(to_dict(cfg))))
    assert to_dict(again) == to_dict(cfg)


def test_seed_propagates():
    cfg = from_dict(RunConfig, {"seed": 17})
    assert cfg.data.synthetic.seed == 17 and cfg.train.seed == 17


def test_nested_seed_not_accepted():
    with pytest.raises(ConfigError, match="train.seed: unknown key"):
        from_dict(RunConfig, {"train": {"seed": 3}})


def test_unknown_key_path():
    with pytest.raises(ConfigError, match=r"train\.optimizer\.lr: unknown key"):
        from_dict(RunConfig, {"train": {"optimizer": {"lr": 0.1}}})


def test_wrong_type():
    with pytest.raises(ConfigError, match="train.total_iters"):
        from_dict(RunConfig, {"train": {"total_iters": "many"}})


def test_validation_error_wrapped():
    with pytest.raises(ConfigError, match="k < c"):
        from_dict(RunConfig, {"data": {"synthetic": {"n_classes": 3, "n_alpha_classes": 3}}})


def test_invalid_method():
    with pytest.raises(ConfigError, match="method"):
        from_dict(RunConfig, {"train": {"method": "nope"}})


def test_seed_range():
    with pytest.raises(ConfigError):
        RunConfig(seed=-1)


def test_velocities_not_configurable():
    assert "velocities" not in to_dict(RunConfig())["train"]["optimizer"]


def test_load_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 2, "train": {"method": "cdan", "total_iters": 5}}))
    cfg = load_config(p)
    assert (cfg.seed, cfg.train.method, cfg.train.total_iters) == (2, "cdan", 5)


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{seed: 1")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
