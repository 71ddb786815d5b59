"""Glyph discriminator: character crops from a probability map and a frozen classifier."""

from __future__ import annotations

import hashlib
import logging
import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .annotations import NUM_CHAR_CLASSES

log = logging.getLogger(__name__)

PATCH = 32
PAD = 0.10


class CharClassifier(nn.Module):
    """Three conv blocks, global average pool and a linear 37-way head."""

    def __init__(self, num_classes=NUM_CHAR_CLASSES, widths=(32, 64, 128)):
        super().__init__()
        layers, cin = [], 1
        for i, cout in enumerate(widths):
            layers += [nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(inplace=True)]
            if i < len(widths) - 1:
                layers.append(nn.MaxPool2d(2))
            cin = cout
        self.features = nn.Sequential(*layers)
        self.fc = nn.Linear(cin, num_classes)

    def forward(self, x):
        return self.fc(self.features(x).mean(dim=(2, 3)))

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        return self

    @property
    def frozen(self):
        return not any(p.requires_grad for p in self.parameters())


def param_hash(model):
    """SHA-256 over all parameter and buffer bytes, in state-dict order."""
    h = hashlib.sha256()
    for name, t in model.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def crop_rect(quad, height, width, pad=PAD):
    """Padded, clamped axis-aligned box ``(x0, y0, x1, y1)`` or None if empty."""
    x0, y0, x1, y1 = quad.bbox()
    px, py = pad * (x1 - x0), pad * (y1 - y0)
    x0, x1 = max(x0 - px, 0.0), min(x1 + px, float(width))
    y0, y1 = max(y0 - py, 0.0), min(y1 + py, float(height))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return x0, y0, x1, y1


def _sample_grid(rects, height, width, size, dtype):
    """``grid_sample`` grid placing ``size`` samples at cell centres of each rect."""
    r = torch.as_tensor(rects, dtype=dtype)
    k = (torch.arange(size, dtype=dtype) + 0.5) / size
    xs = r[:, 0:1] + k * (r[:, 2:3] - r[:, 0:1])  # (N, size)
    ys = r[:, 1:2] + k * (r[:, 3:4] - r[:, 1:2])
    gx = 2.0 * xs / width - 1.0
    gy = 2.0 * ys / height - 1.0
    n = len(rects)
    return torch.stack([gx[:, None, :].expand(n, size, size), gy[:, :, None].expand(n, size, size)], dim=-1)


def crop_patches(maps, rects, batch_index, size=PATCH):
    """Bilinearly resample boxes from ``maps`` (B, H, W) into (N, 1, size, size).

    Pixel ``(r, c)`` is treated as the value at ``(c + 0.5, r + 0.5)``; samples
    beyond the outermost pixel centres take the border value.
    """
    B, H, W = maps.shape
    if not rects:
        return maps.new_zeros((0, 1, size, size))
    grid = _sample_grid(rects, H, W, size, maps.dtype).to(maps.device)
    src = maps[torch.as_tensor(batch_index, dtype=torch.long, device=maps.device)].unsqueeze(1)
    return F.grid_sample(src, grid, mode="bilinear", padding_mode="border", align_corners=False)


def char_crop(fg_prob, chars, size=PATCH, pad=PAD):
    """Crop one patch per character from a single (H, W) foreground map.

    Returns ``(patches (N, 1, size, size), labels (N,), kept indices)``;
    characters whose padded box is empty are skipped with a warning.
    """
    H, W = fg_prob.shape[-2:]
    rects, keep = [], []
    for i, ch in enumerate(chars):
        r = crop_rect(ch.quad, H, W, pad)
        if r is None:
            log.warning("skipping char %d (%r): degenerate crop box", i, ch.text)
            continue
        rects.append(r)
        keep.append(i)
    patches = crop_patches(fg_prob.reshape(1, H, W), rects, [0] * len(rects), size)
    labels = torch.tensor([chars[i].class_id for i in keep], dtype=torch.long)
    return patches, labels, keep


def batch_char_crops(fg_prob, char_lists, size=PATCH, pad=PAD):
    """Crops for a batch; ``char_lists[b]`` holds the CharRecords of image ``b``."""
    B, H, W = fg_prob.shape
    rects, bidx, labels = [], [], []
    for b, chars in enumerate(char_lists):
        for ch in chars:
            r = crop_rect(ch.quad, H, W, pad)
            if r is None:
                continue
            rects.append(r)
            bidx.append(b)
            labels.append(ch.class_id)
    patches = crop_patches(fg_prob, rects, bidx, size)
    return patches, torch.tensor(labels, dtype=torch.long)


def discriminator_loss(fg_prob, char_lists, clf, return_flag=False):
    """Mean cross-entropy of the frozen classifier over all character crops.

    ``fg_prob`` is the foreground channel of ``x'_sem`` upsampled to image
    size, ``(B, H, W)``.  Gradients reach ``fg_prob`` only.  With no crops
    the loss is 0 and the disabled flag is set.
    """
    if not clf.frozen:
        raise RuntimeError("glyph classifier must be frozen before use as a discriminator")
    patches, labels = batch_char_crops(fg_prob, char_lists)
    if len(labels) == 0:
        zero = fg_prob.sum() * 0.0
        return (zero, True) if return_flag else zero
    logits = clf(patches.to(next(clf.parameters()).dtype))
    loss = F.cross_entropy(logits, labels.to(logits.device))
    return (loss, False) if return_flag else loss


def gt_char_dataset(samples, size=PATCH, pad=PAD):
    """Crops of the ground-truth word masks at every annotated character."""
    patches, labels = [], []
    for s in samples:
        chars = s.chars
        if not chars:
            continue
        m = torch.from_numpy(s.masks.word_mask.astype(np.float32))
        p, l, _ = char_crop(m, chars, size, pad)
        patches.append(p)
        labels.append(l)
    if not patches:
        return torch.zeros((0, 1, size, size)), torch.zeros((0,), dtype=torch.long)
    return torch.cat(patches), torch.cat(labels)


def _jitter(patches, gen, amount):
    """Random sub-patch shift and scale, resampled back to the patch size."""
    n = patches.shape[0]
    scale = 1.0 + (torch.rand(n, generator=gen) * 2 - 1) * amount
    shift = (torch.rand(n, 2, generator=gen) * 2 - 1) * amount
    theta = torch.zeros(n, 2, 3)
    theta[:, 0, 0] = scale
    theta[:, 1, 1] = scale
    theta[:, :, 2] = shift
    grid = F.affine_grid(theta, list(patches.shape), align_corners=False)
    return F.grid_sample(patches, grid, mode="bilinear", padding_mode="zeros", align_corners=False)


@torch.no_grad()
def accuracy(clf, patches, labels, batch=512):
    if len(labels) == 0:
        return float("nan")
    correct = 0
    for i in range(0, len(labels), batch):
        correct += int((clf(patches[i:i + batch]).argmax(1) == labels[i:i + batch]).sum())
    return correct / len(labels)


def pretrain_classifier(train_patches, train_labels, val_patches=None, val_labels=None,
                        epochs=30, seed=0, batch_size=64, lr=3e-3, jitter=0.1):
    """Train a :class:`CharClassifier` on GT crops and return it frozen.

    Returns ``(classifier, held-out accuracy)``; accuracy is NaN without a
    held-out set.
    """
    present = set(train_labels.tolist())
    missing = [k for k in range(NUM_CHAR_CLASSES) if k not in present]
    if missing:
        log.warning("glyph classes absent from training crops: %s", missing)
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    clf = CharClassifier()
    opt = torch.optim.Adam(clf.parameters(), lr=lr)
    n = len(train_labels)
    steps = epochs * max(math.ceil(n / batch_size), 1)
    sched = torch.optim.lr_scheduler.OneCycleLR(opt, max_lr=lr, total_steps=steps)
    clf.train()
    for epoch in range(epochs):
        order = torch.randperm(n, generator=gen)
        for i in range(0, n, batch_size):
            idx = order[i:i + batch_size]
            x = train_patches[idx]
            if jitter > 0:
                x = _jitter(x, gen, jitter)
            loss = F.cross_entropy(clf(x), train_labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
        log.info("glyph pretrain epoch %d loss %.4f", epoch, loss.item())
    clf.freeze()
    acc = accuracy(clf, val_patches, val_labels) if val_patches is not None else float("nan")
    log.info("glyph classifier held-out accuracy %.4f", acc)
    return clf, acc
