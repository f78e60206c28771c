"""Training configuration and its flat ``key = value`` file format.

Top-level keys map to :class:`TrainConfig` fields; dotted keys address a
sub-config, e.g. ``loss.lambda = 1`` or ``data.target_resolution = 32, 64``.
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .attention import COMBINE_MODES
from .data import DatasetConfig
from .errors import InvalidConfigError
from .losses import LossConfig
from .translation import TranslationWeights

# File keys that differ from the Python field names.
ALIASES = {"loss.lambda": "loss.lam"}


@dataclass(frozen=True)
class ModelConfig:
    ste_dim: int = 64            # structure code has 4 * ste_dim channels
    ste_n_res: int = 4
    style_dim: int = 8
    gen_mlp_dim: int = 256
    disc_dim: int = 64
    disc_layers: int = 4
    disc_scales: int = 3
    ms_activation: str = "softplus"
    dsa_width: int = 16
    dp_width: int = 16
    up_kernel: int = 5           # up-projection / generator upsampling conv size
    max_depth: float = 80.0

    def __post_init__(self):
        for name in ("ste_dim", "ste_n_res", "style_dim", "gen_mlp_dim", "disc_dim", "disc_layers",
                     "disc_scales", "dsa_width", "dp_width", "up_kernel"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"model.{name} must be positive")


@dataclass(frozen=True)
class Stage1Config:
    """Translation training keeps its own optimizer settings."""

    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 1e-4
    lr_decay: float = 0.5
    lr_step: int = 10
    epochs: int = 20
    batch_size: int = 1
    lambda1: float = 10.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    gan_mode: str = "lsgan"
    flip_only: bool = True       # translation training augments with flips only

    def weights(self) -> TranslationWeights:
        return TranslationWeights(self.lambda1, self.lambda2, self.lambda3, self.gan_mode)

    def __post_init__(self):
        self.weights()
        if self.lr <= 0 or self.epochs <= 0 or self.batch_size <= 0 or self.lr_step <= 0:
            raise InvalidConfigError("stage1 lr, epochs, batch_size and lr_step must be positive")


@dataclass(frozen=True)
class PathsConfig:
    source: str = ""
    style: str = ""
    labeled: str = ""


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 1e-4
    lr_decay: float = 0.5
    lr_step: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    weight_decay: float = 1e-4
    epochs: int = 60
    batch_size: int = 8
    stage: int = 1
    seed: int = 0
    combine: str = "multiply"
    loss: LossConfig = field(default_factory=LossConfig)
    data: DatasetConfig = field(default_factory=DatasetConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    model: ModelConfig = field(default_factory=ModelConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        for name in ("base_lr", "lr_decay", "adam_beta1", "adam_beta2"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise InvalidConfigError("weight_decay must be non-negative")
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr_step <= 0:
            raise InvalidConfigError("epochs, batch_size and lr_step must be positive")
        if self.stage not in (1, 2, 3, 4):
            raise InvalidConfigError(f"stage must be 1..4, got {self.stage}")
        if self.combine not in COMBINE_MODES:
            raise InvalidConfigError(f"combine must be one of {COMBINE_MODES}, got {self.combine!r}")

    def replace(self, **changes) -> "TrainConfig":
        """Copy with overrides; dotted names (``"loss.lam"``) reach into sub-configs."""
        return apply_overrides(self, changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _coerce(value: str, current, name: str):
    value = value.strip()
    try:
        if isinstance(current, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            parts = [p.strip() for p in value.strip("()").split(",") if p.strip()]
            if len(parts) != len(current):
                raise ValueError(value)
            return tuple(type(c)(p) for c, p in zip(current, parts))
    except ValueError:
        raise InvalidConfigError(f"bad value for {name}: {value!r}") from None
    return value


def apply_overrides(config: TrainConfig, overrides: dict) -> TrainConfig:
    top, nested = {}, {}
    for key, value in overrides.items():
        key = ALIASES.get(key, key)
        if "." in key:
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = value
        else:
            top[key] = value
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    for key, value in top.items():
        if key not in known:
            raise InvalidConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            top[key] = _coerce(value, getattr(config, key), key)
    for section, values in nested.items():
        if section not in known or not dataclasses.is_dataclass(getattr(config, section)):
            raise InvalidConfigError(f"unknown config section {section!r}")
        sub = getattr(config, section)
        sub_fields = {f.name for f in dataclasses.fields(sub)}
        for name, value in list(values.items()):
            if name not in sub_fields:
                raise InvalidConfigError(f"unknown config key {section}.{name}")
            if isinstance(value, str):
                values[name] = _coerce(value, getattr(sub, name), f"{section}.{name}")
        try:
            top[section] = dataclasses.replace(sub, **values)
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(str(exc)) from exc
    try:
        return dataclasses.replace(config, **top)
    except TypeError as exc:
        raise InvalidConfigError(str(exc)) from exc


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        overrides[key] = value
    return apply_overrides(base or TrainConfig(), overrides)


def load_config(path) -> TrainConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def format_config(config: TrainConfig) -> str:
    lines = []
    inverse = {v: k for k, v in ALIASES.items()}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            for sf in dataclasses.fields(value):
                key = f"{f.name}.{sf.name}"
                v = getattr(value, sf.name)
                v = ", ".join(str(x) for x in v) if isinstance(v, tuple) else v
                lines.append(f"{inverse.get(key, key)} = {v}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_from_dict(d: dict) -> TrainConfig:
    """Inverse of :meth:`TrainConfig.to_dict` (used when reading checkpoint metadata)."""
    flat = {}
    for key, value in d.items():
        if isinstance(value, dict):
            for sk, sv in value.items():
                flat[f"{key}.{sk}"] = tuple(sv) if isinstance(sv, list) else sv
        else:
            flat[key] = value
    return apply_overrides(TrainConfig(), flat)


TOY_OVERRIDES = {
    "model.ste_dim": 16,
    "model.ste_n_res": 2,
    "model.gen_mlp_dim": 64,
    "model.disc_dim": 16,
    "model.disc_layers": 3,
    "model.dsa_width": 4,
    "model.dp_width": 8,
    "model.up_kernel": 3,
    "stage1.lr": 1e-3,
    "stage1.lr_step": 1000,
    "stage1.batch_size": 4,
    "base_lr": 3e-3,
    "data.target_resolution": (32, 64),
}


def toy_config(**overrides) -> TrainConfig:
    """Desk-scale network sizes for the procedural world."""
    return apply_overrides(TrainConfig(), {**TOY_OVERRIDES, **overrides})
