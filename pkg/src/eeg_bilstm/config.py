"""Pipeline configuration: YAML file, then command-line overrides."""

from __future__ import annotations

import copy
import hashlib

import yaml

from .errors import ConfigError
from .features import DEFAULT_BANDS, parse_bands
from .nn.model import parse_arch
from .nn.training import TrainConfig
from .synth import ClassProfile, SynthConfig, default_profiles

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "synth": {
        "classes": 3,
        "segments": 200,
        "channels": 8,
        "rate": 128.0,
        "window_s": 1.0,
        "gain_ratio": 4.0,
        "noise_floor": 0.1,
        "amplitude_uv": 10.0,
    },
    "preprocess": {
        "target_rate": None,
        "low_hz": 0.5,
        "high_hz": 50.0,
        "order": 4,
        "var_factor": 5.0,
        "flat_eps": 1e-12,
    },
    "features": {
        "bands": ",".join(f"{b.name}:{b.low_hz:g}-{b.high_hz:g}" for b in DEFAULT_BANDS),
        "window_s": 1.0,
        "steps": 4,
    },
    "adjacency": {"montage": "standard62", "k": None, "global_pairs": True},
    "train": {
        "arch": "bilstm-attwg",
        "learning_rate": 0.001,
        "batch_size": 64,
        "epochs": 100,
        "dropout_rate": 0.5,
        "split": 0.8,
        "hidden_size": 128,
        "dense_units": 64,
        "clip_norm": 5.0,
        "standardize": True,
    },
}


def _merge(base, over, path=""):
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path + k!r} must be a mapping")
            _merge(base[k], v, path + k + ".")
        else:
            base[k] = v
    return base


def load_config(path=None, overrides=None):
    """Defaults, then the YAML file at ``path``, then ``overrides`` (flags win).

    ``overrides`` maps dotted keys (``"train.epochs"``) to values; ``None``
    values are ignored so unset flags do not clobber the file.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge(cfg, data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node[p]
        if leaf not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[leaf] = value
    validate(cfg)
    return cfg


def stage_seed(seed, stage):
    """Derive a stage-local 32-bit seed from the run seed and a stage name."""
    digest = hashlib.sha256(f"{int(seed)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def synth_config(cfg) -> SynthConfig:
    s = cfg["synth"]
    profiles = default_profiles(float(s["gain_ratio"]))
    n = int(s["classes"])
    if not 2 <= n <= len(profiles):
        raise ConfigError(f"synth.classes must be between 2 and {len(profiles)}")
    return SynthConfig(
        profiles=profiles[:n], channels=int(s["channels"]), rate=float(s["rate"]),
        segments_per_class=int(s["segments"]), window_s=float(s["window_s"]),
        noise_floor=float(s["noise_floor"]), amplitude_uv=float(s["amplitude_uv"]),
        seed=stage_seed(cfg["seed"], "generate"), split=float(cfg["train"]["split"]),
    )


def train_config(cfg) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=float(t["learning_rate"]), batch_size=int(t["batch_size"]),
        epochs=int(t["epochs"]), dropout_rate=float(t["dropout_rate"]),
        seed=stage_seed(cfg["seed"], "train"), split=float(t["split"]),
        hidden_size=int(t["hidden_size"]), dense_units=int(t["dense_units"]),
        clip_norm=None if t["clip_norm"] in (None, 0) else float(t["clip_norm"]),
        standardize=bool(t["standardize"]),
    )


def validate(cfg):
    try:
        synth_config(cfg).validate()
        train_config(cfg)
        parse_arch(cfg["train"]["arch"])
        parse_bands(cfg["features"]["bands"])
        if int(cfg["features"]["steps"]) < 1:
            raise ConfigError("features.steps must be >= 1")
        if int(cfg["threads"]) < 1:
            raise ConfigError("threads must be >= 1")
        p = cfg["preprocess"]
        if not 0 < float(p["low_hz"]) < float(p["high_hz"]):
            raise ConfigError("preprocess needs 0 < low_hz < high_hz")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {exc}") from None
