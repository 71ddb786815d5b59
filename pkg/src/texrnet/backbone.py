"""Backbone adapter contract, the toy encoder, parameter counting and checkpoints."""

from __future__ import annotations

import json
import os
from typing import Protocol

import torch
import torch.nn as nn

VALID_STRIDES = (1, 2, 4, 8)


class Backbone(Protocol):
    """Anything mapping (B, 3, H, W) images to (B, m, ceil(H/s), ceil(W/s)) features."""

    m: int
    stride: int

    def __call__(self, image: torch.Tensor) -> torch.Tensor: ...

    def parameters(self): ...


class ToyBackbone(nn.Module):
    """Four 3x3 conv + ReLU blocks, two of them stride 2 (total stride 4)."""

    def __init__(self, m=64, width=32):
        super().__init__()
        self.m = m
        self.stride = 4
        self.body = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, m, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(m, m, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        for mod in self.body:
            if isinstance(mod, nn.Conv2d):
                nn.init.kaiming_normal_(mod.weight, nonlinearity="relu")
                nn.init.zeros_(mod.bias)

    def forward(self, image):
        if image.dim() != 4 or image.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) image, got {tuple(image.shape)}")
        if image.shape[-2] < self.stride or image.shape[-1] < self.stride:
            raise ValueError("image smaller than backbone stride")
        if not torch.isfinite(image).all():
            raise ValueError("non-finite values in backbone input")
        return self.body(image)


BACKBONES = {"toy": ToyBackbone}


def build_backbone(name="toy", **kwargs):
    try:
        cls = BACKBONES[name]
    except KeyError:
        raise ValueError(f"unknown backbone {name!r}") from None
    bb = cls(**kwargs)
    if bb.stride not in VALID_STRIDES:
        raise ValueError(f"backbone stride {bb.stride} not in {VALID_STRIDES}")
    return bb


def param_count(model):
    """Number of learnable scalars (parameters with ``requires_grad``)."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def save_checkpoint(path, model, config=None, iteration=0, seed=0, **extra):
    """Write ``<path>`` (torch state dict) and ``<path>.json`` sidecar."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    torch.save(model.state_dict(), path)
    meta = {"config": config or {}, "iteration": int(iteration), "seed": int(seed), **extra}
    with open(path + ".json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def load_checkpoint(path):
    """Return ``(state_dict, sidecar dict)``."""
    state = torch.load(path, map_location="cpu", weights_only=True)
    with open(path + ".json") as f:
        meta = json.load(f)
    return state, meta
