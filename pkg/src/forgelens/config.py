"""Run configuration: a flat, versioned ``key = value`` text format.

Lines are ``dotted.key = value`` with ``#`` comments; values are typed by
the schema below (int, float, bool, str).  Unknown keys and missing or
mismatched ``config_version`` entries are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError

CONFIG_VERSION = 1


@dataclass
class ModulesConfig:
    cross_modal: bool = True
    artifact: bool = True
    soft_prompt: bool = True
    answer_heuristics: bool = True


@dataclass
class ModelConfig:
    image_size: int = 32
    patch_size: int = 8
    image_layers: int = 4
    image_heads: int = 4
    text_layers: int = 2
    text_heads: int = 4
    text_max_len: int = 24
    dim: int = 64  # shared width of encoders, adapters, and the LM
    lm_layers: int = 2
    lm_heads: int = 4
    lm_max_len: int = 96
    soft_prompts: int = 4
    cross_modal_heads: int = 1
    cross_modal_residual: bool = True
    agg_heads: int = 4
    log_map: bool = True


@dataclass
class LossConfig:
    pixel: bool = True
    patch: bool = True
    focal_gamma: float = 2.0
    dice_smooth: float = 1.0


@dataclass
class TrainParams:
    lr: float = 3e-4
    batch_size: int = 16
    epochs: int = 10
    warmup_frac: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    perturb_jpeg_prob: float = 0.15
    perturb_blur_prob: float = 0.15
    warm_start_samples: int = 192
    warm_start_epochs: int = 1
    lm_pretrain_epochs: int = 2
    bridge_align_epochs: int = 1
    aux_lr: float = 1e-3


@dataclass
class TrainConfig:
    seed: int = 7
    train_dir: str = ""
    modules: ModulesConfig = field(default_factory=ModulesConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainParams = field(default_factory=TrainParams)

    def validate(self) -> "TrainConfig":
        if self.train.lr <= 0:
            raise ConfigError(f"train.lr must be positive, got {self.train.lr}")
        if self.train.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.train.batch_size}")
        if self.model.image_size % self.model.patch_size != 0:
            raise ConfigError("model.image_size must be divisible by model.patch_size")
        if self.model.soft_prompts < 0:
            raise ConfigError("model.soft_prompts must be >= 0")
        return self


_SECTIONS = {
    "modules": ModulesConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainParams,
}
_TOP_LEVEL = {"seed": int, "train_dir": str}


def _field_types(cls):
    return {f.name: f.type for f in fields(cls)}


def _parse_value(raw: str, typ):
    raw = raw.strip()
    if typ in ("bool", bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if typ in ("int", int):
        return int(raw)
    if typ in ("float", float):
        return float(raw)
    return raw


def parse_config(text: str) -> TrainConfig:
    cfg = TrainConfig()
    seen_version = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key == "config_version":
            if int(raw) != CONFIG_VERSION:
                raise ConfigError(f"unsupported config_version {raw} (expected {CONFIG_VERSION})")
            seen_version = True
        elif key in _TOP_LEVEL:
            setattr(cfg, key, _parse_value(raw, _TOP_LEVEL[key]))
        elif "." in key:
            section, name = key.split(".", 1)
            if section not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section {section!r}")
            target = getattr(cfg, section)
            types = _field_types(type(target))
            if name not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            setattr(target, name, _parse_value(raw, types[name]))
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if not seen_version:
        raise ConfigError("config is missing required 'config_version'")
    return cfg.validate()


def config_to_text(cfg: TrainConfig) -> str:
    lines = [f"config_version = {CONFIG_VERSION}", f"seed = {cfg.seed}",
             f"train_dir = {cfg.train_dir}"]
    for section in ("modules", "model", "loss", "train"):
        obj = getattr(cfg, section)
        for f in fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{section}.{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def save_config(cfg: TrainConfig, path):
    Path(path).write_text(config_to_text(cfg))
