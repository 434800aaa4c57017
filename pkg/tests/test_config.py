"""Config resolution: defaults, JSON files, dotted-key overrides."""

import copy
import json

import pytest

from qdscale.config import (
    DEFAULTS,
    get_key,
    load_config,
    parse_override_tokens,
    save_config,
    set_key,
)
from qdscale.errors import ConfigurationError


def test_defaults_are_copied():
    cfg = load_config()
    assert cfg == DEFAULTS
    cfg["train"]["steps"] = 1
    cfg["model"]["level_channels"].append(99)
    assert DEFAULTS["train"]["steps"] == 500
    assert DEFAULTS["model"]["level_channels"] == [8, 16, 16, 16, 16]


@pytest.mark.parametrize(
    "tokens,key,expected",
    [
        (["--train.steps", "42"], "train.steps", 42),
        (["--train.lr=0.001"], "train.lr", 0.001),
        (["--hybrid.enabled", "false"], "hybrid.enabled", False),
        (["--diffusion.schedule", "cosine"], "diffusion.schedule", "cosine"),
        (["--model.level_channels", "[4,8]"], "model.level_channels", [4, 8]),
        (["--ansatz.variant", "B"], "ansatz.variant", "B"),
    ],
)
def test_override_tokens(tokens, key, expected):
    cfg = load_config(override_tokens=tokens)
    assert get_key(cfg, key) == expected


def test_override_parse_forms():
    pairs = parse_override_tokens(["--a.b", "1", "--c.d=x", "--e.f", "true"])
    assert pairs == [("a.b", 1), ("c.d", "x"), ("e.f", True)]


@pytest.mark.parametrize(
    "tokens,match",
    [
        (["--train.step", "5"], "unknown config key"),
        (["--nope", "5"], "unknown config key"),
        (["stray"], "unexpected argument"),
        (["--train.steps"], "missing a value"),
    ],
)
def test_bad_overrides(tokens, match):
    with pytest.raises(ConfigurationError, match=match):
        load_config(override_tokens=tokens)


def test_file_merge_and_precedence(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"train": {"steps": 7}, "seed": 3}))
    cfg = load_config(path)
    assert cfg["train"]["steps"] == 7
    assert cfg["seed"] == 3
    assert cfg["train"]["lr"] == DEFAULTS["train"]["lr"]
    # overrides beat the file
    cfg = load_config(path, override_tokens=["--train.steps", "9"])
    assert cfg["train"]["steps"] == 9


def test_file_unknown_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"trian": {"steps": 7}}))
    with pytest.raises(ConfigurationError, match="unknown config key"):
        load_config(path)


def test_file_scalar_for_table(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"train": 5}))
    with pytest.raises(ConfigurationError, match="expects a table"):
        load_config(path)


@pytest.mark.parametrize("text,match", [
    ("{not json", "not valid JSON"),
    ("[1, 2]", "JSON object"),
])
def test_file_malformed(tmp_path, text, match):
    path = tmp_path / "cfg.json"
    path.write_text(text)
    with pytest.raises(ConfigurationError, match=match):
        load_config(path)


def test_file_missing(tmp_path):
    with pytest.raises(ConfigurationError, match="does not exist"):
        load_config(tmp_path / "nope.json")


def test_run_table_accepts_arbitrary_keys(tmp_path):
    # resolved_config.json replay: the run block holds per-command arguments
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"run": {"command": "train", "stage": "diffusion"}}))
    cfg = load_config(path)
    assert cfg["run"]["stage"] == "diffusion"


def test_save_load_round_trip(tmp_path):
    cfg = load_config(override_tokens=["--train.steps", "11", "--data.gamma", "2.5"])
    cfg["run"] = {"command": "gen-data", "out": "somewhere"}
    path = tmp_path / "resolved_config.json"
    save_config(cfg, path)
    again = load_config(path)
    assert again == cfg


def test_set_get_key():
    cfg = copy.deepcopy(DEFAULTS)
    set_key(cfg, "noise.p_dep", 0.25)
    assert get_key(cfg, "noise.p_dep") == 0.25
    with pytest.raises(ConfigurationError, match="unknown config key"):
        set_key(cfg, "noise.q_dep", 0.25)
    with pytest.raises(ConfigurationError, match="unknown config key"):
        get_key(cfg, "noise.p_dep.deeper")
