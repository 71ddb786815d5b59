"""In-memory training data: union of dataset roots, seeded crops and flips."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
import torch

from .annotations import load_dataset
from .losses import make_trimap


@dataclass
class Item:
    sample_id: str
    root: int
    image: np.ndarray  # float32 (3, H, W)
    mask: np.ndarray  # bool (H, W), word mask
    ignore: np.ndarray  # bool (H, W)
    trimap: np.ndarray  # bool (H, W)
    chars: list
    record: object


def load_items(roots, split, trimap_radius=2):
    items = []
    for ri, root in enumerate(roots):
        for s in load_dataset(root, split):
            img = s.load_image().transpose(2, 0, 1).copy()
            mask = s.masks.word_mask
            items.append(Item(s.sample_id, ri, img, mask, s.ignore_mask(), make_trimap(mask, trimap_radius), s.chars, s))
    return items


def _crop_chars(chars, x0, y0, size_w, size_h):
    kept = []
    for c in chars:
        bx0, by0, bx1, by1 = c.quad.bbox()
        if bx0 >= x0 and by0 >= y0 and bx1 <= x0 + size_w and by1 <= y0 + size_h:
            kept.append(type(c)(c.quad.translated(-x0, -y0), c.text, c.class_id))
    return kept


class BatchSampler:
    """Seeded sampler over the concatenation of all roots.

    Indices are drawn epoch by epoch from a fresh permutation, so every
    sample (hence every root) is visited once per epoch-equivalent.
    """

    def __init__(self, items, batch_size, crop_size, hflip=True, seed=0):
        if not items:
            raise ValueError("no training samples")
        self.items = items
        self.batch_size = batch_size
        self.crop_size = crop_size
        self.hflip = hflip
        self.rng = np.random.default_rng(seed)
        self._order = []
        self.coverage = Counter()

    def _next_index(self):
        if not self._order:
            self._order = list(self.rng.permutation(len(self.items)))
        return int(self._order.pop(0))

    def _sample(self, it):
        _, H, W = it.image.shape
        S = self.crop_size
        ch, cw = min(S, H), min(S, W)
        y0 = int(self.rng.integers(0, H - ch + 1))
        x0 = int(self.rng.integers(0, W - cw + 1))
        img = np.zeros((3, S, S), np.float32)
        mask = np.zeros((S, S), bool)
        ignore = np.ones((S, S), bool)  # padding is ignored
        tri = np.zeros((S, S), bool)
        img[:, :ch, :cw] = it.image[:, y0:y0 + ch, x0:x0 + cw]
        mask[:ch, :cw] = it.mask[y0:y0 + ch, x0:x0 + cw]
        ignore[:ch, :cw] = it.ignore[y0:y0 + ch, x0:x0 + cw]
        tri[:ch, :cw] = it.trimap[y0:y0 + ch, x0:x0 + cw]
        chars = _crop_chars(it.chars, x0, y0, cw, ch)
        if self.hflip and self.rng.random() < 0.5:
            img, mask, ignore, tri = img[..., ::-1], mask[:, ::-1], ignore[:, ::-1], tri[:, ::-1]
            chars = []  # mirrored glyphs are not valid discriminator targets
        return img, mask, ignore, tri, chars

    def next_batch(self):
        parts = []
        for _ in range(self.batch_size):
            it = self.items[self._next_index()]
            self.coverage[it.root] += 1
            parts.append(self._sample(it))
        img, mask, ignore, tri, chars = zip(*parts)
        return {
            "image": torch.from_numpy(np.stack(img).copy()),
            "mask": torch.from_numpy(np.stack(mask).copy()).long(),
            "ignore": torch.from_numpy(np.stack(ignore).copy()),
            "trimap": torch.from_numpy(np.stack(tri).copy()),
            "chars": list(chars),
        }
