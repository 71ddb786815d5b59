"""Deterministic synthetic text scenes written in the TextSeg layout.

Glyphs are the 5x7 bitmaps from :mod:`texrnet.font`, scaled by
nearest-neighbour through an inverse rotation.  Every mask is produced by
the same placement arithmetic that paints the pixels, so annotations are
exact by construction.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace

import numpy as np

from .annotations import (
    CharRecord,
    MaskSet,
    QuadPolygon,
    SampleRecord,
    WordRecord,
    class_id_for,
    save_sample,
    write_split,
)
from .font import ALPHABET, GLYPH_COLS, GLYPH_ROWS, glyph_atlas

log = logging.getLogger(__name__)

_ATLAS = glyph_atlas()
# glyph bitmaps padded to a 6x8 cell grid (1 column / row of spacing)
_CELL_COLS = GLYPH_COLS + 1


@dataclass(frozen=True)
class SynthConfig:
    height: int = 128
    width: int = 128
    words_per_image: tuple = (1, 3)
    chars_per_word: tuple = (1, 4)
    scale: tuple = (5, 7)  # pixels per glyph cell; glyph height is 7 * scale
    contrast: tuple = (0.45, 0.8)
    effect_prob: float = 0.5
    shadow_offset: tuple = (2, 2)
    rotation: tuple = (0.0, 0.0)  # degrees
    noise: float = 0.03
    clutter: int = 0  # max number of random background rectangles
    seed: int = 0
    max_retries: int = 50

    def __post_init__(self):
        if self.height < 64 or self.width < 64:
            raise ValueError("image size must be at least 64x64")
        for name in ("words_per_image", "chars_per_word", "scale", "contrast", "rotation"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is inverted: {(lo, hi)}")
        if self.words_per_image[0] < 1 or self.chars_per_word[0] < 1 or self.scale[0] < 1:
            raise ValueError("word/char counts and scale must be positive")
        if not 0.0 <= self.effect_prob <= 1.0:
            raise ValueError("effect_prob must lie in [0, 1]")


PRESETS = {
    "easy": SynthConfig(),
    "hard": SynthConfig(
        scale=(5, 6),
        contrast=(0.15, 0.35),
        rotation=(-15.0, 15.0),
        noise=0.06,
        clutter=4,
    ),
}


def preset(name, **overrides):
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(cfg, **overrides)


_SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


def sample_seed(cfg_seed, index, split="train"):
    """Per-sample seed derived from (config seed, split, sample index).

    The split takes part so that train and test samples with the same index
    differ when generated from one config.
    """
    entropy = [int(cfg_seed), _SPLIT_CODES.get(split, 3), int(index)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


class _Word:
    """A placed word: rotation about its center plus an axis-aligned local frame."""

    def __init__(self, text, scale, cx, cy, angle_deg):
        self.text = text
        self.scale = scale
        self.cx, self.cy = cx, cy
        self.theta = np.deg2rad(angle_deg)
        self.w = (len(text) * _CELL_COLS - 1) * scale
        self.h = GLYPH_ROWS * scale

    def to_image(self, lx, ly):
        """Map local coordinates (origin top-left of the word box) to the image."""
        c, s = np.cos(self.theta), np.sin(self.theta)
        ux, uy = lx - self.w / 2, ly - self.h / 2
        return self.cx + c * ux - s * uy, self.cy + s * ux + c * uy

    def to_local(self, x, y):
        c, s = np.cos(self.theta), np.sin(self.theta)
        dx, dy = x - self.cx, y - self.cy
        return c * dx + s * dy + self.w / 2, -s * dx + c * dy + self.h / 2

    def quad(self, lx0, ly0, lx1, ly1):
        pts = [self.to_image(lx, ly) for lx, ly in ((lx0, ly0), (lx1, ly0), (lx1, ly1), (lx0, ly1))]
        return QuadPolygon(pts)

    def word_quad(self):
        return self.quad(0, 0, self.w, self.h)

    def char_quad(self, k):
        x0 = k * _CELL_COLS * self.scale
        return self.quad(x0, 0, x0 + GLYPH_COLS * self.scale, self.h)

    def ink(self, height, width):
        """(H, W) int map: 0 background, k+1 for pixels of character k."""
        out = np.zeros((height, width), dtype=np.int32)
        x0, y0, x1, y1 = self.word_quad().bbox()
        r0, r1 = max(int(np.floor(y0)), 0), min(int(np.ceil(y1)) + 1, height)
        c0, c1 = max(int(np.floor(x0)), 0), min(int(np.ceil(x1)) + 1, width)
        if r1 <= r0 or c1 <= c0:
            return out
        rr, cc = np.mgrid[r0:r1, c0:c1]
        lx, ly = self.to_local(cc + 0.5, rr + 0.5)
        gx = np.floor(lx / self.scale).astype(np.int64)
        gy = np.floor(ly / self.scale).astype(np.int64)
        k = gx // _CELL_COLS
        col = gx % _CELL_COLS
        valid = (lx >= 0) & (ly >= 0) & (gy < GLYPH_ROWS) & (k < len(self.text)) & (col < GLYPH_COLS)
        sub = np.zeros(rr.shape, dtype=np.int32)
        for idx, ch in enumerate(self.text):
            sel = valid & (k == idx)
            bm = _ATLAS[ch.upper()]
            hit = np.zeros(rr.shape, dtype=bool)
            hit[sel] = bm[gy[sel], col[sel]]
            sub[hit] = idx + 1
        out[r0:r1, c0:c1] = sub
        return out


def _luminance_pair(rng, lo, hi):
    contrast = rng.uniform(lo, hi)
    dark = rng.uniform(0.05, 0.95 - contrast)
    light = dark + contrast
    return (light, dark) if rng.random() < 0.5 else (dark, light)


def _tinted(rng, lum):
    tint = rng.uniform(-0.04, 0.04, size=3)
    return np.clip(lum + tint, 0.0, 1.0)


def _shift(mask, dx, dy):
    out = np.zeros_like(mask)
    h, w = mask.shape
    ys, xs = slice(max(dy, 0), h + min(dy, 0)), slice(max(dx, 0), w + min(dx, 0))
    ys_src, xs_src = slice(max(-dy, 0), h + min(-dy, 0)), slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def _place_words(cfg, rng, n_words):
    placed = []
    boxes = []
    dx, dy = cfg.shadow_offset
    margin = 2 + max(abs(dx), abs(dy))
    for _ in range(n_words):
        for _attempt in range(cfg.max_retries):
            n_chars = int(rng.integers(cfg.chars_per_word[0], cfg.chars_per_word[1] + 1))
            scale = int(rng.integers(cfg.scale[0], cfg.scale[1] + 1))
            angle = float(rng.uniform(*cfg.rotation)) if cfg.rotation != (0.0, 0.0) else 0.0
            text = "".join(rng.choice(list(ALPHABET), size=n_chars))
            probe = _Word(text, scale, 0.0, 0.0, angle)
            bx0, by0, bx1, by1 = probe.word_quad().bbox()
            half_w, half_h = (bx1 - bx0) / 2 + margin, (by1 - by0) / 2 + margin
            if 2 * half_w > cfg.width or 2 * half_h > cfg.height:
                continue
            cx = float(rng.integers(int(np.ceil(half_w)), int(cfg.width - np.ceil(half_w)) + 1))
            cy = float(rng.integers(int(np.ceil(half_h)), int(cfg.height - np.ceil(half_h)) + 1))
            box = (cx - half_w, cy - half_h, cx + half_w, cy + half_h)
            if any(box[0] < b[2] and b[0] < box[2] and box[1] < b[3] and b[1] < box[3] for b in boxes):
                continue
            placed.append(_Word(text, scale, cx, cy, angle))
            boxes.append(box)
            break
        else:
            return None
    return placed


def render_sample(cfg, sample_seed, sample_id="sample", split="train"):
    """Render one scene; returns ``(SampleRecord, uint8 image (H, W, 3))``.

    The record's ``image_path`` is empty until the sample is saved.
    """
    rng = np.random.default_rng(sample_seed)
    H, W = cfg.height, cfg.width
    n_words = int(rng.integers(cfg.words_per_image[0], cfg.words_per_image[1] + 1))
    words = None
    while words is None:
        words = _place_words(cfg, rng, n_words)
        if words is None:
            if n_words == 1:
                raise RuntimeError(f"{sample_id}: cannot place a single word; canvas too small for config")
            log.debug("%s: placement failed with %d words, retrying with fewer", sample_id, n_words)
            n_words -= 1

    bg_lum, fg_lum = _luminance_pair(rng, *cfg.contrast)
    bg = _tinted(rng, bg_lum)
    image = np.broadcast_to(bg, (H, W, 3)).copy()
    for _ in range(int(rng.integers(0, cfg.clutter + 1)) if cfg.clutter else 0):
        y0, x0 = int(rng.integers(0, H - 8)), int(rng.integers(0, W - 8))
        y1, x1 = int(rng.integers(y0 + 4, H)), int(rng.integers(x0 + 4, W))
        shade = np.clip(bg_lum + rng.uniform(-0.5, 0.5) * abs(fg_lum - bg_lum), 0, 1)
        image[y0:y1, x0:x1] = _tinted(rng, shade)

    word_mask = np.zeros((H, W), dtype=bool)
    effect_mask = np.zeros((H, W), dtype=bool)
    char_mask = np.zeros((H, W), dtype=np.uint8)
    records = []
    next_index = 1
    dx, dy = cfg.shadow_offset
    for wd in words:
        ink = wd.ink(H, W)
        glyph = ink > 0
        fg = _tinted(rng, np.clip(fg_lum + rng.uniform(-0.03, 0.03), 0, 1))
        surface = glyph
        if rng.random() < cfg.effect_prob:
            shadow = _shift(glyph, dx, dy)
            # half-tone between text and background keeps the shadow separable from both
            shade = 0.5 * (fg_lum + bg_lum)
            image[shadow & ~glyph] = _tinted(rng, shade)
            surface = glyph | shadow
        image[glyph] = fg
        word_mask |= glyph
        effect_mask |= surface

        chars = []
        for k, ch in enumerate(wd.text):
            char_mask[ink == k + 1] = next_index
            next_index += 1
            chars.append(CharRecord(wd.char_quad(k), ch, class_id_for(ch)))
        records.append(WordRecord(wd.word_quad(), wd.text, chars, False))

    if cfg.noise > 0:
        image = image + rng.normal(0.0, cfg.noise, size=image.shape)
    image_u8 = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    rec = SampleRecord(sample_id, "", H, W, records, MaskSet(word_mask, effect_mask, char_mask), split)
    return rec, image_u8


def sample_id_for(split, index):
    return f"{split}_{index:05d}"


def generate_one(cfg, index, root_dir, split):
    sid = sample_id_for(split, index)
    rec, image = render_sample(cfg, sample_seed(cfg.seed, index, split), sid, split)
    try:
        rec.image_path = save_sample(root_dir, rec, image)
    except OSError as e:
        raise OSError(f"{sid}: failed to write sample: {e}") from e
    return rec


def generate_split(cfg, n, root_dir, split, indices=None):
    """Write ``n`` samples into ``root_dir`` and the split file listing them.

    ``indices`` restricts generation to a subset (the split file is left
    untouched in that case), which reproduces those samples bit-for-bit.
    """
    os.makedirs(root_dir, exist_ok=True)
    if indices is not None:
        return [generate_one(cfg, i, root_dir, split).sample_id for i in indices]
    ids = [generate_one(cfg, i, root_dir, split).sample_id for i in range(n)]
    write_split(root_dir, split, ids)
    return {"root": os.path.abspath(root_dir), "split": split, "n": n, "seed": cfg.seed, "ids": ids}
