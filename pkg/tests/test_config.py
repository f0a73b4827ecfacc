import json

import pytest

from aquaradar import config


def test_defaults_build_every_view():
    cfg = config.load()
    assert cfg.dataset_manifest().root_seed == 20240601
    assert cfg.radar_params().n_antennas == 8
    assert cfg.train_config().seed == 0
    assert cfg.forest_config().n_trees == 100


def test_seed_override_reaches_models(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3, "train": {"epochs": 5}}))
    cfg = config.load(p, {"seed": 9, "output_dir": None})
    assert cfg.train_config().seed == 9
    assert cfg.train_config().epochs == 5
    assert cfg.forest_config().seed == 9


@pytest.mark.parametrize("doc, where", [
    ({"colour": 1}, "colour"),
    ({"train": {"lr": 1}}, "train.lr"),
    ({"manifest": {"replicates": 2}}, "manifest.replicates"),
    ({"radar": {"bandwith": 1e9}}, "radar.bandwith"),
])
def test_unknown_keys_name_their_path(doc, where):
    with pytest.raises(config.ConfigError, match=where.replace(".", r"\.")):
        config.from_dict(doc)


def test_invalid_values_are_config_errors():
    with pytest.raises(config.ConfigError):
        config.from_dict({"train": {"alpha": 2.0}})
    with pytest.raises(config.ConfigError):
        config.from_dict({"materials": "/nonexistent/materials.json"})


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    with pytest.raises(config.ConfigError, match="invalid JSON"):
        config.load(p)
