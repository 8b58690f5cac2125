"""Training configuration and its strict JSON file schema.

Defaults mirror the reference recipe: SGD with momentum 0.9, learning
rate 1e-3 cut by 10x after epoch 50, weight decay 5e-4 on weights (not
biases), up to 400 epochs, margins (0.3, 0.3, 0.8), both auxiliary loss
weights 0.5, batches of 4 categories x 4 instances, averaged
aggregation, equal-weight score fusion. Config files may set any subset
of keys; unknown keys anywhere are rejected.
"""

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from costream.errors import ConfigError
from costream.shared import AGGREGATIONS

_TOP_KEYS = {
    "dataset", "out_dir", "seed", "margins", "lambdas", "optimizer", "batch",
    "model", "segments", "aggregation", "fusion_weight", "toggles",
    "connection_variant", "positive_mode", "share_classifier",
    "max_epochs", "early_stop", "early_stop_patience", "val_fraction",
}
_MARGIN_KEYS = {"alpha1", "alpha2", "alpha3"}
_LAMBDA_KEYS = {"lambda1", "lambda2"}
_OPT_KEYS = {"lr0", "lr_decay_factor", "lr_decay_epoch", "momentum", "weight_decay"}
_BATCH_KEYS = {"n_categories", "m_instances"}
_MODEL_KEYS = {"feature_dim", "hidden_dim", "embed_dim", "proj_dim"}
_SEGMENT_KEYS = {"k_segments", "snippet"}
_TOGGLE_KEYS = {"connection", "ranking_losses"}


@dataclass
class TrainConfig:
    seed: int = 0
    # objective
    alpha1: float = 0.3
    alpha2: float = 0.3
    alpha3: float = 0.8
    lambda1: float = 0.5
    lambda2: float = 0.5
    positive_mode: str = "hard"
    # optimizer
    lr0: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_decay_epoch: int = 50
    momentum: float = 0.9
    weight_decay: float = 5e-4
    max_epochs: int = 400
    early_stop: bool = True
    early_stop_patience: int = 20
    val_fraction: float = 0.2
    # batches
    n_categories: int = 4
    m_instances: int = 4
    # architecture
    feature_dim: int = 16
    hidden_dim: int = 32
    embed_dim: int | None = None  # None means feature_dim // 2
    proj_dim: int | None = None   # None means feature_dim
    aggregation: str = "avg"
    share_classifier: bool = True
    connection_variant: str = "softmax"
    connection_enabled: bool = True
    ranking_enabled: bool = True
    k_segments: int = 3
    snippet: int = 10
    fusion_weight: float = 0.5

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.connection_variant not in ("softmax", "scalar"):
            raise ConfigError(f"connection_variant must be 'softmax' or 'scalar', got {self.connection_variant!r}")
        if self.positive_mode not in ("hard", "same_instance"):
            raise ConfigError(f"positive_mode must be 'hard' or 'same_instance', got {self.positive_mode!r}")
        for name in ("alpha1", "alpha2", "alpha3", "lr0", "fusion_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be positive")
        if self.n_categories < 2 or self.m_instances < 2:
            raise ConfigError("batch spec needs n_categories >= 2 and m_instances >= 2")

    @property
    def effective_embed_dim(self) -> int:
        return self.feature_dim // 2 if self.embed_dim is None else self.embed_dim

    @property
    def effective_proj_dim(self) -> int:
        return self.feature_dim if self.proj_dim is None else self.proj_dim

    def replaced(self, **kwargs) -> "TrainConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(kwargs)
        return TrainConfig(**values)


@dataclass
class RunSpec:
    """A config file: what to train on, where to write, how to train."""

    config: TrainConfig
    dataset: str | None = None
    out_dir: str | None = None
    raw: dict = field(default_factory=dict)


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _typed(mapping: dict, key: str, kinds, where: str):
    value = mapping[key]
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise ConfigError(f"{where}.{key} has wrong type {type(value).__name__}")
    if not isinstance(value, kinds):
        raise ConfigError(f"{where}.{key} has wrong type {type(value).__name__}")
    return value


def config_from_dict(data: dict) -> RunSpec:
    """Validate a parsed config mapping; unknown keys anywhere are errors."""
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    _reject_unknown(data, _TOP_KEYS, "config")

    kw: dict = {}

    def pull_group(name: str, allowed: set, rename: dict[str, str] | None = None):
        group = data.get(name)
        if group is None:
            return
        if not isinstance(group, dict):
            raise ConfigError(f"config.{name} must be an object")
        _reject_unknown(group, allowed, name)
        for key, value in group.items():
            target = (rename or {}).get(key, key)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name}.{key} must be a number, got {type(value).__name__}")
            kw[target] = value

    pull_group("margins", _MARGIN_KEYS)
    pull_group("lambdas", _LAMBDA_KEYS)
    pull_group("optimizer", _OPT_KEYS)
    pull_group("batch", _BATCH_KEYS)
    pull_group("model", _MODEL_KEYS)
    pull_group("segments", _SEGMENT_KEYS)

    toggles = data.get("toggles")
    if toggles is not None:
        if not isinstance(toggles, dict):
            raise ConfigError("config.toggles must be an object")
        _reject_unknown(toggles, _TOGGLE_KEYS, "toggles")
        if "connection" in toggles:
            kw["connection_enabled"] = _typed(toggles, "connection", bool, "toggles")
        if "ranking_losses" in toggles:
            kw["ranking_enabled"] = _typed(toggles, "ranking_losses", bool, "toggles")

    for key, kinds in (("seed", int), ("aggregation", str), ("fusion_weight", (int, float)),
                       ("connection_variant", str), ("positive_mode", str),
                       ("share_classifier", bool), ("max_epochs", int),
                       ("early_stop", bool), ("early_stop_patience", int),
                       ("val_fraction", (int, float))):
        if key in data:
            kw[key] = _typed(data, key, kinds, "config")

    int_fields = {"seed", "lr_decay_epoch", "max_epochs", "early_stop_patience",
                  "n_categories", "m_instances", "feature_dim", "hidden_dim",
                  "embed_dim", "proj_dim", "k_segments", "snippet"}
    for key in list(kw):
        if key in int_fields:
            value = kw[key]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"config value {key} must be an integer, got {value!r}")

    try:
        config = TrainConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc

    dataset = data.get("dataset")
    out_dir = data.get("out_dir")
    for name, value in (("dataset", dataset), ("out_dir", out_dir)):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"config.{name} must be a string path")
    return RunSpec(config=config, dataset=dataset, out_dir=out_dir, raw=data)


def load_config(path) -> RunSpec:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p.name} is not valid JSON: {exc}") from exc
    return config_from_dict(data)
