import json

import pytest

from txt2img_mhn.config import ConfigError, RunConfig, config_hash, load_config


def small_dict(**overrides):
    raw = {
        "data": {"manifest": "world/manifest.tsv", "image_size": 16},
        "text": {"vocab_size": 64},
        "vq": {"image_size": 16, "k": 8, "d": 4, "widths": [4, 4, 4]},
        "mhn": {"text_vocab": 64, "n": 4, "m": 4, "k": 8, "d_emb": 8},
        "seed": 7,
    }
    raw.update(overrides)
    return raw


def test_round_trip_through_json(tmp_path):
    cfg = RunConfig.from_dict(small_dict())
    path = tmp_path / "run.json"
    path.write_text(cfg.to_json())
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()
    assert config_hash(again) == config_hash(cfg)


def test_defaults_fill_missing_sections():
    cfg = RunConfig.from_dict(small_dict())
    assert cfg.decode.mode == "greedy" and cfg.eval.is_splits == 10


def test_hash_is_stable_and_sensitive():
    base = RunConfig.from_dict(small_dict())
    assert config_hash(base) == config_hash(RunConfig.from_dict(small_dict()))
    assert config_hash(base) != config_hash(RunConfig.from_dict(small_dict(seed=8)))
    assert len(config_hash(base)) == 16


@pytest.mark.parametrize(
    "overrides,match",
    [
        (dict(mhn={"text_vocab": 64, "n": 4, "m": 4, "k": 16, "d_emb": 8}), "mhn.k"),
        (dict(mhn={"text_vocab": 64, "n": 4, "m": 9, "k": 8, "d_emb": 8}), "mhn.m"),
        (dict(mhn={"text_vocab": 32, "n": 4, "m": 4, "k": 8, "d_emb": 8}), "text_vocab"),
        (dict(data={"image_size": 32}), "image_size"),
        (dict(seed=-1), "seed"),
        (dict(extra={}), "unknown config sections"),
        (dict(text={"vocab": 64}), "unknown keys"),
        (dict(decode={"mode": "beam"}), "decode"),
        (dict(vq="big"), "must be an object"),
    ],
)
def test_validation(overrides, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(small_dict(**overrides))


def test_config_error_is_a_value_error():
    assert issubclass(ConfigError, ValueError)


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)
    path.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError, match="object"):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.json")
