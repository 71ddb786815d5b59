"""TextSeg-format annotation model: quads, word/char records, masks, on-disk IO.

On-disk layout under a dataset root::

    images/<id>.png            8-bit RGB
    annotations/<id>.json      word/char quads and transcriptions
    masks/<id>_word.png        0 / 255
    masks/<id>_effect.png      0 / 255
    masks/<id>_char.png        0 = background, k = char instance (reading order)
    splits/{train,val,test}.txt
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

SPLITS = ("train", "val", "test")
NUM_CHAR_CLASSES = 37
MISC_CLASS = 36


class DatasetError(Exception):
    """Structural problem with a stored sample."""

    def __init__(self, sample_id, message):
        super().__init__(f"{sample_id}: {message}")
        self.sample_id = sample_id


def class_id_for(ch):
    """Case-folded class: letters 0-25, digits 26-35, anything else 36."""
    if len(ch) == 1 and ch.isascii():
        if ch.isalpha():
            return ord(ch.lower()) - ord("a")
        if ch.isdigit():
            return 26 + ord(ch) - ord("0")
    return MISC_CLASS


@dataclass
class QuadPolygon:
    vertices: np.ndarray  # (4, 2) float64, (x, y) with y down

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(4, 2)

    @classmethod
    def from_box(cls, x0, y0, x1, y1):
        return cls([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def signed_area(self):
        """Shoelace area; positive for clockwise order on a y-down screen."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def bbox(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def clamped(self, height, width):
        v = self.vertices.copy()
        v[:, 0] = np.clip(v[:, 0], 0, width)
        v[:, 1] = np.clip(v[:, 1], 0, height)
        return QuadPolygon(v)

    def translated(self, dx, dy):
        return QuadPolygon(self.vertices + np.array([dx, dy]))

    def to_list(self):
        return [[float(x), float(y)] for x, y in self.vertices]

    def __eq__(self, other):
        return isinstance(other, QuadPolygon) and np.array_equal(self.vertices, other.vertices)


@dataclass
class CharRecord:
    quad: QuadPolygon
    text: str
    class_id: int


@dataclass
class WordRecord:
    quad: QuadPolygon
    text: str
    chars: list = field(default_factory=list)
    ignore: bool = False


@dataclass
class MaskSet:
    word_mask: np.ndarray  # bool (H, W)
    word_effect_mask: np.ndarray  # bool (H, W)
    char_instance_mask: np.ndarray  # uint8 (H, W)

    def __eq__(self, other):
        return (
            isinstance(other, MaskSet)
            and np.array_equal(self.word_mask, other.word_mask)
            and np.array_equal(self.word_effect_mask, other.word_effect_mask)
            and np.array_equal(self.char_instance_mask, other.char_instance_mask)
        )


@dataclass
class SampleRecord:
    sample_id: str
    image_path: str
    height: int
    width: int
    words: list
    masks: MaskSet
    split: str = "train"

    @property
    def chars(self):
        return [c for w in self.words for c in w.chars]

    def ignore_mask(self):
        """Union of the rasterized quads of words flagged ``ignore``."""
        out = np.zeros((self.height, self.width), dtype=bool)
        for w in self.words:
            if w.ignore:
                out |= rasterize_quad(w.quad, self.height, self.width)
        return out

    def load_image(self):
        """RGB image as float32 (H, W, 3) in [0, 1]."""
        with Image.open(self.image_path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


@dataclass(frozen=True)
class Violation:
    code: str
    severity: str  # "error" or "warning"
    message: str


# ---------------------------------------------------------------------------
# rasterization


def _points_in_quad(px, py, verts, tol=1e-9):
    """Boundary-inclusive point-in-polygon test, vectorized over points."""
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    n = len(verts)
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        # crossing number with half-open rule on y
        crosses = (y0 > py) != (y1 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (px < xint)
        ex, ey = x1 - x0, y1 - y0
        cross = ex * (py - y0) - ey * (px - x0)
        dot = (px - x0) * ex + (py - y0) * ey
        seg2 = ex * ex + ey * ey
        scale = max(seg2, 1.0)
        on_edge |= (np.abs(cross) <= tol * scale) & (dot >= -tol * scale) & (dot <= seg2 + tol * scale)
    return inside | on_edge


def rasterize_quad(q, h, w, return_flag=False):
    """Binary (h, w) mask of pixels whose center lies inside ``q`` (edges count).

    A zero-area quad yields an empty mask; with ``return_flag`` the
    degeneracy flag is returned alongside.
    """
    q = q if isinstance(q, QuadPolygon) else QuadPolygon(q)
    mask = np.zeros((h, w), dtype=bool)
    degenerate = abs(q.signed_area()) < 1e-12
    if not degenerate and h > 0 and w > 0:
        x0, y0, x1, y1 = q.bbox()
        c0 = max(int(np.floor(x0 - 0.5)), 0)
        c1 = min(int(np.ceil(x1 - 0.5)) + 1, w)
        r0 = max(int(np.floor(y0 - 0.5)), 0)
        r1 = min(int(np.ceil(y1 - 0.5)) + 1, h)
        if c1 > c0 and r1 > r0:
            rr, cc = np.mgrid[r0:r1, c0:c1]
            mask[r0:r1, c0:c1] = _points_in_quad(cc + 0.5, rr + 0.5, q.vertices)
    if return_flag:
        return mask, degenerate
    return mask


# ---------------------------------------------------------------------------
# validation


def _segments_cross(p1, p2, p3, p4):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _quad_violations(q, height, width, what):
    out = []
    v = q.vertices
    if not np.all(np.isfinite(v)):
        return [Violation("QUAD_NONFINITE", "error", f"{what}: non-finite vertex")]
    if _segments_cross(v[0], v[1], v[2], v[3]) or _segments_cross(v[1], v[2], v[3], v[0]):
        out.append(Violation("QUAD_SELF_INTERSECT", "error", f"{what}: self-intersecting quad"))
    area = q.signed_area()
    if abs(area) < 1e-12:
        out.append(Violation("QUAD_DEGENERATE", "error", f"{what}: zero-area quad"))
    elif area < 0:
        out.append(Violation("QUAD_ORDER", "error", f"{what}: vertices are counter-clockwise"))
    else:
        top = v[1] - v[0]
        # first edge must run left-to-right along the top of the text
        if top[0] <= 0 or abs(top[1]) >= top[0]:
            out.append(Violation("QUAD_START", "error", f"{what}: first vertex is not top-left"))
    eps = 1e-6
    if v[:, 0].min() < -eps or v[:, 1].min() < -eps or v[:, 0].max() > width + eps or v[:, 1].max() > height + eps:
        out.append(Violation("QUAD_BOUNDS", "error", f"{what}: vertex outside image"))
    return out


def validate_sample(s, strict_char_mask=False, char_margin=2.0):
    """Semantic checks on a structurally loaded sample.

    Returns a list of :class:`Violation`; errors break hard invariants,
    warnings flag suspicious but tolerated annotations.  Char pixels outside
    the word mask are an error only with ``strict_char_mask`` (synthetic data).
    """
    out = []
    hw = (s.height, s.width)
    m = s.masks
    for name in ("word_mask", "word_effect_mask", "char_instance_mask"):
        if getattr(m, name).shape != hw:
            out.append(Violation("MASK_SHAPE", "error", f"{name} shape {getattr(m, name).shape} != {hw}"))
    if out:
        return out

    for wi, word in enumerate(s.words):
        out += _quad_violations(word.quad, s.height, s.width, f"word {wi}")
        wx0, wy0, wx1, wy1 = word.quad.bbox()
        for ci, ch in enumerate(word.chars):
            what = f"word {wi} char {ci}"
            out += _quad_violations(ch.quad, s.height, s.width, what)
            if len(ch.text) != 1:
                out.append(Violation("CHAR_TEXT", "error", f"{what}: text {ch.text!r} is not a single character"))
            elif ch.class_id != class_id_for(ch.text):
                out.append(Violation("CLASS_ID", "error", f"{what}: class {ch.class_id} != {class_id_for(ch.text)}"))
            # bbox test against the dilated word bbox is a cheap containment proxy
            cx0, cy0, cx1, cy1 = ch.quad.bbox()
            if (cx0 < wx0 - char_margin or cy0 < wy0 - char_margin
                    or cx1 > wx1 + char_margin or cy1 > wy1 + char_margin):
                out.append(Violation("CHAR_OUTSIDE_WORD", "warning", f"{what}: char quad leaves word quad"))

    if np.any(m.word_mask & ~m.word_effect_mask):
        out.append(Violation("EFFECT_SUBSET", "error", "word mask pixel outside word-effect mask"))
    stray = (m.char_instance_mask > 0) & ~m.word_mask
    if np.any(stray):
        sev = "error" if strict_char_mask else "warning"
        out.append(Violation("CHAR_NOT_IN_WORD", sev, f"{int(stray.sum())} char pixels outside word mask"))
    n_chars = sum(len(w.chars) for w in s.words)
    if m.char_instance_mask.max(initial=0) > n_chars:
        out.append(Violation("CHAR_INDEX", "error", "char mask index exceeds number of chars"))
    return out


def errors_only(violations):
    return [v for v in violations if v.severity == "error"]


# ---------------------------------------------------------------------------
# statistics


@dataclass
class StatsReport:
    n_images: int
    words_per_image: dict
    chars_per_image: dict
    word_coverage: list
    effect_coverage: list
    letter_frequency: list  # 37 entries
    total_words: int = 0
    total_chars: int = 0

    def to_dict(self):
        return {
            "n_images": self.n_images,
            "total_words": self.total_words,
            "total_chars": self.total_chars,
            "words_per_image": {str(k): v for k, v in sorted(self.words_per_image.items())},
            "chars_per_image": {str(k): v for k, v in sorted(self.chars_per_image.items())},
            "word_coverage": self.word_coverage,
            "effect_coverage": self.effect_coverage,
            "letter_frequency": self.letter_frequency,
        }


def dataset_stats(ds):
    words_hist = Counter()
    chars_hist = Counter()
    letters = np.zeros(NUM_CHAR_CLASSES, dtype=np.int64)
    word_cov, effect_cov = [], []
    for s in ds:
        words_hist[len(s.words)] += 1
        chars = s.chars
        chars_hist[len(chars)] += 1
        for c in chars:
            letters[c.class_id] += 1
        area = float(s.height * s.width)
        word_cov.append(float(s.masks.word_mask.sum()) / area)
        effect_cov.append(float(s.masks.word_effect_mask.sum()) / area)
    total = letters.sum()
    freq = (letters / total).tolist() if total else [0.0] * NUM_CHAR_CLASSES
    return StatsReport(
        n_images=len(ds),
        words_per_image=dict(words_hist),
        chars_per_image=dict(chars_hist),
        word_coverage=word_cov,
        effect_coverage=effect_cov,
        letter_frequency=freq,
        total_words=sum(k * v for k, v in words_hist.items()),
        total_chars=int(total),
    )


# ---------------------------------------------------------------------------
# IO


def _annotation_dict(s):
    return {
        "id": s.sample_id,
        "height": s.height,
        "width": s.width,
        "words": [
            {
                "text": w.text,
                "ignore": bool(w.ignore),
                "quad": w.quad.to_list(),
                "chars": [{"text": c.text, "class_id": int(c.class_id), "quad": c.quad.to_list()} for c in w.chars],
            }
            for w in s.words
        ],
    }


def _write_mask(path, arr):
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8), mode="L").save(path)


def save_sample(root, s, image):
    """Write one sample (image as uint8 (H, W, 3)) into the dataset layout."""
    for sub in ("images", "annotations", "masks", "splits"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    image_path = os.path.join(root, "images", f"{s.sample_id}.png")
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), mode="RGB").save(image_path)
    with open(os.path.join(root, "annotations", f"{s.sample_id}.json"), "w") as f:
        json.dump(_annotation_dict(s), f, indent=1)
    mdir = os.path.join(root, "masks")
    _write_mask(os.path.join(mdir, f"{s.sample_id}_word.png"), s.masks.word_mask.astype(np.uint8) * 255)
    _write_mask(os.path.join(mdir, f"{s.sample_id}_effect.png"), s.masks.word_effect_mask.astype(np.uint8) * 255)
    _write_mask(os.path.join(mdir, f"{s.sample_id}_char.png"), s.masks.char_instance_mask)
    return image_path


def write_split(root, split, ids):
    os.makedirs(os.path.join(root, "splits"), exist_ok=True)
    with open(os.path.join(root, "splits", f"{split}.txt"), "w") as f:
        f.writelines(f"{i}\n" for i in ids)


def read_split(root, split):
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    path = os.path.join(root, "splits", f"{split}.txt")
    with open(path) as f:
        return [line.strip() for line in f if line.strip()]


def _read_mask(path, sample_id, hw, binary):
    if not os.path.exists(path):
        raise DatasetError(sample_id, f"missing file {path}")
    with Image.open(path) as im:
        if im.mode != "L":
            raise DatasetError(sample_id, f"{os.path.basename(path)} is not single-channel")
        arr = np.asarray(im, dtype=np.uint8)
    if arr.shape != hw:
        raise DatasetError(sample_id, f"{os.path.basename(path)} is {arr.shape[0]}x{arr.shape[1]}, image is {hw[0]}x{hw[1]}")
    if binary:
        bad = (arr != 0) & (arr != 255)
        if bad.any():
            raise DatasetError(sample_id, f"{os.path.basename(path)} has values other than 0/255")
        return arr == 255
    if (arr == 255).any():
        raise DatasetError(sample_id, "char mask uses reserved value 255")
    return arr.copy()


def _parse_quad(raw, sample_id, height, width):
    try:
        q = QuadPolygon(raw)
    except (ValueError, TypeError) as e:
        raise DatasetError(sample_id, f"bad quad {raw!r}: {e}") from None
    return q.clamped(height, width)


def load_sample(root, sample_id, split="train"):
    ann_path = os.path.join(root, "annotations", f"{sample_id}.json")
    image_path = os.path.join(root, "images", f"{sample_id}.png")
    for p in (ann_path, image_path):
        if not os.path.exists(p):
            raise DatasetError(sample_id, f"missing file {p}")
    try:
        with open(ann_path) as f:
            ann = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(sample_id, f"malformed JSON: {e}") from None
    try:
        height, width = int(ann["height"]), int(ann["width"])
        raw_words = ann["words"]
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(sample_id, f"annotation missing field {e}") from None
    if ann.get("id", sample_id) != sample_id:
        raise DatasetError(sample_id, f"annotation id {ann.get('id')!r} does not match file name")
    with Image.open(image_path) as im:
        iw, ih = im.size
    if (ih, iw) != (height, width):
        raise DatasetError(sample_id, f"image is {ih}x{iw}, annotation says {height}x{width}")

    words = []
    try:
        for rw in raw_words:
            chars = [
                CharRecord(_parse_quad(rc["quad"], sample_id, height, width), str(rc["text"]), int(rc["class_id"]))
                for rc in rw.get("chars", [])
            ]
            words.append(WordRecord(_parse_quad(rw["quad"], sample_id, height, width), str(rw["text"]),
                                    chars, bool(rw.get("ignore", False))))
    except (KeyError, TypeError) as e:
        raise DatasetError(sample_id, f"malformed word entry: {e}") from None

    mdir = os.path.join(root, "masks")
    hw = (height, width)
    masks = MaskSet(
        _read_mask(os.path.join(mdir, f"{sample_id}_word.png"), sample_id, hw, True),
        _read_mask(os.path.join(mdir, f"{sample_id}_effect.png"), sample_id, hw, True),
        _read_mask(os.path.join(mdir, f"{sample_id}_char.png"), sample_id, hw, False),
    )
    return SampleRecord(sample_id, image_path, height, width, words, masks, split)


def load_dataset(root_dir, split):
    """Load every sample listed in ``splits/<split>.txt``."""
    return [load_sample(root_dir, sid, split) for sid in read_split(root_dir, split)]
