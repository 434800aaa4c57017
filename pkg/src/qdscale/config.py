"""Run configuration: JSON files, defaults, and dotted-key overrides.

A config is a nested dict. Files and command-line overrides are merged onto
the defaults; unknown keys are rejected so typos fail loudly. Override values
are parsed as JSON with a fallback to plain strings, so
``--train.steps 500 --hybrid.enabled false --diffusion.schedule cosine``
all do the obvious thing. Every run writes its fully resolved configuration
(plus the command's own arguments under ``run``) to ``resolved_config.json``.
"""

import copy
import json
from pathlib import Path

from .errors import ConfigurationError

DEFAULTS = {
    "seed": 0,
    "data": {
        "size": 32,
        "gamma": 5.0 / 3.0,
        "sigma": 2.0,
        "mean_u": 3.0,
        "mean_v": 1.0,
        "rho": 0.3,
        "n_train": 256,
        "n_val": 100,
        "n_ood": 100,
        "ood_gamma": 3.0,
        "ood_mean_shift": 1.5,
    },
    "model": {
        "level_channels": [8, 16, 16, 16, 16],
        "emb_dim": 32,
    },
    "diffusion": {
        "T": 64,
        "schedule": "linear",
    },
    "train": {
        "steps": 500,
        "lr": 2e-3,
        "batch": 8,
        "checkpoint_every": 100,
    },
    "ansatz": {
        "n_qubits": 12,
        "variant": "B",
        "layers": 1,
    },
    "hybrid": {
        "enabled": False,
        "n_circuits": 1,
    },
    "eval": {
        "members": 16,
        "fss_neighborhoods": [1, 3, 5, 9],
    },
    "noise": {
        "p_dep": 0.0,
        "p_ro": 0.0,
        "shots": 256,
        "seed": 0,
    },
    # run: command-specific arguments, filled in by the CLI
    "run": {},
}


def _merge(base, incoming, path=""):
    for key, value in incoming.items():
        here = path + key
        if key not in base:
            raise ConfigurationError("unknown config key %r" % here)
        if here == "run":
            # command arguments recorded by the CLI; keys vary per command
            if not isinstance(value, dict):
                raise ConfigurationError("config key 'run' expects a table")
            base[key] = copy.deepcopy(value)
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError("config key %r expects a table" % here)
            _merge(base[key], value, here + ".")
        else:
            base[key] = value


def set_key(cfg, dotted, value):
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigurationError("unknown config key %r" % dotted)
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigurationError("unknown config key %r" % dotted)
    node[parts[-1]] = value


def get_key(cfg, dotted):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigurationError("unknown config key %r" % dotted)
        node = node[part]
    return node


def parse_override_tokens(tokens):
    """Turn leftover argv like ['--train.steps', '500', '--a.b=x'] into pairs."""
    pairs = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigurationError("unexpected argument %r" % tok)
        body = tok[2:]
        if "=" in body:
            key, raw = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(tokens):
                raise ConfigurationError("override %r is missing a value" % tok)
            raw = tokens[i + 1]
            i += 2
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        pairs.append((key, value))
    return pairs


def load_config(path=None, override_tokens=()):
    """Defaults <- optional JSON file <- dotted-key overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError("config file %s does not exist" % path)
        except json.JSONDecodeError as exc:
            raise ConfigurationError("config file %s is not valid JSON: %s" % (path, exc))
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file %s must hold a JSON object" % path)
        _merge(cfg, loaded)
    for key, value in parse_override_tokens(list(override_tokens)):
        set_key(cfg, key, value)
    return cfg


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
