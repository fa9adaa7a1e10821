"""Run configuration: JSON file plus dotted command-line overrides,
validated against a schema of known keys and echoed into output
directories for reproducibility."""

import json
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "corpus": {
        "n_classes": 12,
        "n_noise_classes": 2,
        "clips_per_class": 42,
        "clip_duration_s": 10.0,
    },
    "model": {
        "channels": [16, 32, 48, 64, 128],
        "head_hidden": 128,
        "embed_dim": 64,
    },
    "train": {
        "epochs": 30,
        "batch_size": 32,
        "peak_lr": 0.01,
        "final_lr": 0.0001,
        "warmup_frac": 0.1,
        "weight_decay": 0.0001,
        "crop_frames": 998,
        "augment": True,
    },
    "distill": {
        "temperature": 2.0,
        "kd_weight": 0.5,
        "channels": [8, 16, 24, 32, 64],
    },
    "augment": {
        "n_time_shift": 8,
        "n_delta": 8,
        "n_masked": 8,
        "n_shuffled": 8,
    },
    "detector": {
        "epochs": 200,
        "lr": 0.001,
        "weight_decay": 0.0001,
        "gamma": 1.0,
        "margin_weight": 1.0,
        "bce_weight": 0.1,
        "proj_dim": 32,
    },
    "evaluate": {
        "reps": 10,
    },
}


def _merge(base, update, path=""):
    out = dict(base)
    for key, value in update.items():
        full = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {full}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{full} must be a table, got {value!r}")
            out[key] = _merge(base[key], value, full + ".")
        else:
            out[key] = value
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_override(cfg, dotted):
    if "=" not in dotted:
        raise ConfigError(f"override {dotted!r} is not KEY=VALUE")
    key, _, raw = dotted.partition("=")
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key: {key}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key: {key}")
    if isinstance(node[parts[-1]], dict):
        raise ConfigError(f"{key} is a table, not a value")
    node[parts[-1]] = _parse_value(raw.strip())
    return cfg


def load_config(path=None, overrides=(), seed=None):
    """Defaults, overlaid by a JSON file, then KEY.SUBKEY=VALUE pairs."""
    cfg = json.loads(json.dumps(DEFAULTS))     # deep copy
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, user)
    for item in overrides:
        _apply_override(cfg, item)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def echo_config(cfg, out_dir):
    """Write the resolved configuration next to a run's outputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config.json"
    path.write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    return path
