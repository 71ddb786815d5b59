"""Text refinement head: key pooling, attention-based similarity checking, fusion.

Maps are handled flattened as ``(..., channels, n)`` where ``n`` counts
spatial positions at feature resolution.  All functional ops broadcast over
leading batch dimensions.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import build_backbone

EPS = 1e-8


def initial_predict(x_f, conv):
    """1x1 conv with bias then per-position softmax; returns ``(x_sem, x_sem_prob)``."""
    x_sem = conv(x_f)
    return x_sem, torch.softmax(x_sem, dim=1)


def cosine_similarity_matrix(prob, eps=EPS):
    """Pairwise cosine similarity between class channels with a zeroed diagonal.

    ``prob`` is ``(..., c, n)``; the result is ``(..., c, c)``.  A channel with
    zero norm gets zero similarity to everything.
    """
    gram = prob @ prob.transpose(-1, -2)
    norms = torch.linalg.vector_norm(prob, dim=-1)
    X = gram / (norms.unsqueeze(-1) * norms.unsqueeze(-2) + eps)
    eye = torch.eye(prob.shape[-2], dtype=torch.bool, device=prob.device)
    return X.masked_fill(eye, 0.0)


def biased_reweight(x_sem, X, kappa=1.0):
    """Weight maps for key pooling, one per class.

    For class ``i`` the logits of every competitor ``j`` are raised by
    ``kappa * X[i, j]`` before the softmax and channel ``i`` is kept, so
    ambiguous predictions lose confidence on ``i``.
    """
    biased = x_sem.unsqueeze(-3) + kappa * X.unsqueeze(-1)  # (..., i, j, n)
    p = torch.softmax(biased, dim=-2)
    return torch.diagonal(p, dim1=-3, dim2=-2).transpose(-1, -2)


def pool_keys(x_f, weights, norm="l1", eps=EPS, return_flag=False):
    """Normalized weighted sum of feature columns per class.

    ``x_f`` is ``(..., m, n)``, ``weights`` ``(..., c, n)``; returns ``v`` of
    shape ``(..., m, c)``.  ``norm="l1"`` gives a weighted mean, ``"l2"``
    divides by the Euclidean norm of the weight map instead.
    """
    if norm == "l1":
        denom = weights.sum(dim=-1)
    elif norm == "l2":
        denom = torch.linalg.vector_norm(weights, dim=-1)
    else:
        raise ValueError(f"unknown key norm {norm!r}")
    v = (x_f @ weights.transpose(-1, -2)) / (denom.unsqueeze(-2) + eps)
    if return_flag:
        return v, denom == 0
    return v


def attention_map(v, x_f):
    """Per-position softmax over classes of the key/feature dot products."""
    return torch.softmax(v.transpose(-1, -2) @ x_f, dim=-2)


def activation_delta(x_att, x_sem_prob):
    """Signed change ``x_att - x'_sem``; positive where attention re-activates."""
    return x_att - x_sem_prob


def downsample_image(image, size):
    return F.interpolate(image, size=size, mode="bilinear", align_corners=False, antialias=True)


def standardize_image(image, eps=1e-2):
    """Zero mean, unit variance per image, so low-contrast scenes reach the backbone at full scale."""
    mean = image.mean(dim=(1, 2, 3), keepdim=True)
    std = image.std(dim=(1, 2, 3), keepdim=True, unbiased=False)
    return (image - mean) / (std + eps)


def upsample(x, size):
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class FusionHead(nn.Module):
    """conv3x3 -> ReLU -> conv3x3 -> ReLU -> conv1x1 over [scores; image; features]."""

    def __init__(self, in_ch, c=2, width=64):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.out = nn.Conv2d(width, c, 1)
        for conv in (self.conv1, self.conv2):
            nn.init.kaiming_normal_(conv.weight, nonlinearity="relu")
            nn.init.zeros_(conv.bias)
        nn.init.zeros_(self.out.bias)

    def forward(self, scores, image_small, x_f):
        h = torch.cat([scores, image_small, x_f], dim=1)
        h = F.relu(self.conv1(h))
        h = F.relu(self.conv2(h))
        return self.out(h)


def fuse_refine(fusion, x_att, image, x_f):
    """Run the fusion convs; returns ``(x_rfn, x_rfn upsampled to image size)``."""
    small = downsample_image(image, x_f.shape[-2:])
    x_rfn = fusion(x_att, small, x_f)
    return x_rfn, upsample(x_rfn, image.shape[-2:])


class TexRNetHead(nn.Module):
    """Initial prediction plus refinement on top of backbone features.

    With ``refine=False`` the head degenerates to a plain 1x1 classifier (the
    baseline segmentation model).  With ``attention=False`` the fusion convs
    consume ``x'_sem`` in place of ``x_att``, so both variants have the same
    parameters.
    """

    def __init__(self, m, c=2, kappa=1.0, key_norm="l1", attention=True, refine=True, fuse_width=64):
        super().__init__()
        self.c = c
        self.kappa = kappa
        self.key_norm = key_norm
        self.attention = attention
        self.refine = refine
        self.classifier = nn.Conv2d(m, c, 1)
        nn.init.zeros_(self.classifier.bias)
        self.fusion = FusionHead(c + 3 + m, c, fuse_width) if refine else None

    def forward(self, x_f, image):
        B, m, h, w = x_f.shape
        x_sem, prob = initial_predict(x_f, self.classifier)
        out = {"x_f": x_f, "x_sem": x_sem, "x_sem_prob": prob}
        if not self.refine:
            out["logits_up"] = upsample(x_sem, image.shape[-2:])
            return out
        if self.attention:
            feat = x_f.flatten(2)
            X = cosine_similarity_matrix(prob.flatten(2))
            weights = biased_reweight(x_sem.flatten(2), X, self.kappa)
            v = pool_keys(feat, weights, self.key_norm)
            x_att = attention_map(v, feat).view(B, self.c, h, w)
            out.update(X=X, weights=weights.view(B, self.c, h, w), v=v, x_att=x_att)
            scores = x_att
        else:
            scores = prob
        x_rfn, x_rfn_up = fuse_refine(self.fusion, scores, image, x_f)
        out.update(x_rfn=x_rfn, logits_up=x_rfn_up)
        return out


class TexRNet(nn.Module):
    """Backbone + refinement head.  ``forward`` returns every intermediate map."""

    def __init__(self, backbone=None, c=2, kappa=1.0, key_norm="l1", attention=True, refine=True, fuse_width=64,
                 standardize=True):
        super().__init__()
        self.backbone = backbone if backbone is not None else build_backbone("toy")
        self.head = TexRNetHead(self.backbone.m, c, kappa, key_norm, attention, refine, fuse_width)
        self.standardize = standardize

    def forward(self, image):
        if self.standardize:
            image = standardize_image(image)
        return self.head(self.backbone(image), image)

    @torch.no_grad()
    def predict(self, image):
        """Binary foreground mask (B, H, W); ties go to background."""
        logits = self.forward(image)["logits_up"]
        return logits[:, 1] > logits[:, 0]
