"""Training configuration and its flat INI file format.

Example::

    [train]
    data_roots = data/easy
    iterations = 2000
    attention = true
    trimap_loss = true
    discriminator_loss = false
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

DATA_ROOT_ENV = "TEXSEG_DATA_ROOT"


def _default_roots():
    root = os.environ.get(DATA_ROOT_ENV)
    return [root] if root else []


@dataclass
class TrainConfig:
    data_roots: list = field(default_factory=_default_roots)
    train_split: str = "train"
    eval_split: str = "test"
    iterations: int = 2000
    warmup: int = 500
    base_lr: float = 0.01
    poly_power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 8
    crop_size: int = 128
    hflip: bool = True
    seed: int = 0
    # component toggles
    refine: bool = True  # False: plain 1x1 classifier baseline
    attention: bool = True
    trimap_loss: bool = True
    discriminator_loss: bool = True
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.1
    kappa: float = 1.0
    trimap_radius: int = 2
    key_norm: str = "l1"
    backbone: str = "toy"
    backbone_m: int = 64
    backbone_width: int = 32
    fuse_width: int = 64
    glyph_ckpt: str = ""
    out_dir: str = "runs/default"
    log_every: int = 10
    ckpt_every: int = 500

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.warmup < self.iterations:
            raise ValueError(f"warmup ({self.warmup}) must be below iterations ({self.iterations})")
        if self.base_lr < 0 or self.poly_power < 0:
            raise ValueError("learning rate and poly power must be nonnegative")
        if self.key_norm not in ("l1", "l2"):
            raise ValueError(f"key_norm must be 'l1' or 'l2', got {self.key_norm!r}")
        if self.trimap_radius < 1:
            raise ValueError("trimap_radius must be >= 1")
        if not self.refine and (self.attention or self.trimap_loss):
            raise ValueError("attention and trimap loss need the refinement branch (refine = true)")

    def toggles(self):
        return {
            "refine": self.refine,
            "trimap": self.refine and self.trimap_loss,
            "discriminator": self.discriminator_loss,
        }

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _coerce(name, raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, list):
        return [p.strip() for p in raw.split(",") if p.strip()]
    return raw


def load_config(path, **overrides):
    """Read a flat ``[train]`` section; every TrainConfig field is addressable."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    section = parser["train"] if parser.has_section("train") else parser.defaults()
    defaults = TrainConfig(data_roots=[]) if not _default_roots() else TrainConfig()
    fields = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(TrainConfig)}
    values = {}
    for key, raw in section.items():
        if key not in fields:
            raise KeyError(f"{path}: unknown config key {key!r}")
        values[key] = _coerce(key, raw, fields[key])
    values.update(overrides)
    if not values.get("data_roots"):
        values.pop("data_roots", None)
    return TrainConfig(**values)


def dump_config(cfg, path):
    parser = configparser.ConfigParser()
    parser["train"] = {
        k: ", ".join(v) if isinstance(v, list) else str(v).lower() if isinstance(v, bool) else str(v)
        for k, v in cfg.to_dict().items()
    }
    with open(path, "w") as f:
        parser.write(f)
