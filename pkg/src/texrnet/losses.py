"""Segmentation losses: cross-entropy, trimap-weighted cross-entropy, total loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import ndimage

PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5  # refined output
    beta: float = 0.5  # trimap
    gamma: float = 0.1  # glyph discriminator

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class LossReport:
    total: object  # float or 0-dim tensor
    components: dict = field(default_factory=dict)

    def as_floats(self):
        def f(x):
            return float(x.detach()) if torch.is_tensor(x) else float(x)

        return {"total": f(self.total), **{k: f(v) for k, v in self.components.items()}}


class NonFiniteLoss(ValueError):
    pass


def _log_probs(pred, input_is_probs):
    if input_is_probs:
        return torch.log(pred.clamp(PROB_FLOOR, 1.0))
    return torch.log_softmax(pred, dim=1)


def _gt_log_prob(pred, gt, input_is_probs):
    """log p of the ground-truth class at each position, shape ``pred.shape`` minus dim 1."""
    logp = _log_probs(pred, input_is_probs)
    if gt.dim() == pred.dim():  # one-hot
        return (gt.to(logp.dtype) * logp).sum(dim=1)
    return logp.gather(1, gt.long().unsqueeze(1)).squeeze(1)


def weighted_cross_entropy(pred, gt, w, input_is_probs=False, return_flag=False):
    """``-sum_j w_j log p_gt(j) / sum_j w_j``.

    ``pred`` is ``(B, c, ...)`` logits (log-softmax applied here) or, with
    ``input_is_probs``, probabilities clipped to ``[1e-7, 1]``.  ``gt`` is an
    integer label map ``(B, ...)`` or a one-hot tensor shaped like ``pred``.
    A zero total weight returns 0 (flagged).
    """
    logp = _gt_log_prob(pred, gt, input_is_probs)
    w = w.to(logp.dtype)
    wsum = w.sum()
    degenerate = bool(wsum <= 0)
    loss = logp.sum() * 0.0 if degenerate else -(w * logp).sum() / wsum
    return (loss, degenerate) if return_flag else loss


def cross_entropy(pred, gt, ignore=None, input_is_probs=False, return_flag=False):
    """Mean ``-log p_gt`` over positions not covered by ``ignore``."""
    keep = torch.ones(pred.shape[:1] + pred.shape[2:], dtype=pred.dtype, device=pred.device)
    if ignore is not None:
        keep = keep * (~ignore.bool()).to(pred.dtype)
    return weighted_cross_entropy(pred, gt, keep, input_is_probs, return_flag)


def make_trimap(gt_mask, r=2):
    """Boundary band: ``dilate(gt, r) XOR erode(gt, r)`` with a (2r+1)^2 square.

    Image borders replicate the nearest pixel, so a constant mask has no band.
    """
    if r < 1:
        raise ValueError("trimap radius must be >= 1")
    g = np.asarray(gt_mask, dtype=bool).astype(np.uint8)
    size = 2 * r + 1
    dil = ndimage.maximum_filter(g, size=size, mode="nearest")
    ero = ndimage.minimum_filter(g, size=size, mode="nearest")
    return dil != ero


def total_loss(l_sem, l_rfn=0.0, l_tri=0.0, l_dis=0.0, weights=LossWeights(), toggles=None):
    """Weighted sum of the four losses; disabled components count as zero.

    ``toggles`` maps ``"refine"``, ``"trimap"`` and ``"discriminator"`` to
    booleans; missing keys mean enabled.
    """
    t = {"refine": True, "trimap": True, "discriminator": True, **(toggles or {})}
    comps = {
        "L_sem": l_sem,
        "L_rfn": l_rfn if t["refine"] else 0.0,
        "L_tri": l_tri if t["trimap"] else 0.0,
        "L_dis": l_dis if t["discriminator"] else 0.0,
    }
    for name, val in comps.items():
        x = float(val.detach()) if torch.is_tensor(val) else float(val)
        if not math.isfinite(x):
            raise NonFiniteLoss(f"{name} is not finite ({x})")
    total = comps["L_sem"] + weights.alpha * comps["L_rfn"] + weights.beta * comps["L_tri"] + weights.gamma * comps["L_dis"]
    return LossReport(total, comps)
