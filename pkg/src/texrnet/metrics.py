"""Foreground IoU and F-score with ignore regions."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other):
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def pixel_counts(pred, gt, ignore=None):
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    keep = np.ones_like(gt)
    if ignore is not None:
        ignore = np.asarray(ignore, dtype=bool)
        if ignore.shape != gt.shape:
            raise ValueError(f"shape mismatch: ignore {ignore.shape} vs gt {gt.shape}")
        keep = ~ignore
    p, g = pred & keep, gt & keep
    tp = int(np.count_nonzero(p & g))
    return Counts(tp, int(np.count_nonzero(p)) - tp, int(np.count_nonzero(g)) - tp)


def iou_from_counts(c):
    """``(fgIoU, empty)``; both masks empty counts as a perfect 1.0."""
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0, True
    return c.tp / denom, False


def fscore_from_counts(c):
    """``(precision, recall, F, flags)``; undefined ratios become 0 and are flagged."""
    flags = set()
    if c.tp + c.fp == 0:
        precision = 0.0
        flags.add("precision_undefined")
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall = 0.0
        flags.add("recall_undefined")
    else:
        recall = c.tp / (c.tp + c.fn)
    if precision + recall == 0:
        f = 0.0
        flags.add("f_undefined")
    else:
        f = 2 * precision * recall / (precision + recall)
    return precision, recall, f, flags


def fg_iou(pred, gt, ignore=None, return_flag=False):
    iou, empty = iou_from_counts(pixel_counts(pred, gt, ignore))
    return (iou, empty) if return_flag else iou


def fg_fscore(pred, gt, ignore=None, return_flags=False):
    p, r, f, flags = fscore_from_counts(pixel_counts(pred, gt, ignore))
    return (p, r, f, flags) if return_flags else (p, r, f)


@dataclass
class EvalResult:
    dataset: str
    split: str
    fgIoU: float
    precision: float
    recall: float
    fscore: float
    n_images: int
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, counts, dataset="", split="", n_images=0):
        iou, _ = iou_from_counts(counts)
        p, r, f, _ = fscore_from_counts(counts)
        return cls(dataset, split, iou, p, r, f, n_images, counts.tp, counts.fp, counts.fn)

    def row(self):
        """Table row; fgIoU reported x100 as in segmentation tables."""
        return {
            "dataset": self.dataset,
            "split": self.split,
            "fgIoU": round(100.0 * self.fgIoU, 4),
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "F-score": round(self.fscore, 6),
            "n_images": self.n_images,
        }


class MetricAccumulator:
    """Global pixel counts plus per-image fgIoU, accumulated in call order."""

    def __init__(self):
        self.total = Counts()
        self.per_image = []

    def update(self, pred, gt, ignore=None, image_id=None):
        c = pixel_counts(pred, gt, ignore)
        self.total = self.total + c
        iou, empty = iou_from_counts(c)
        self.per_image.append({"id": image_id, "fgIoU": iou, "empty": empty})
        return c

    def result(self, dataset="", split=""):
        return EvalResult.from_counts(self.total, dataset, split, len(self.per_image))


RESULT_COLUMNS = ["dataset", "split", "fgIoU", "precision", "recall", "F-score", "n_images"]


def write_results(results, csv_path=None, json_path=None):
    rows = [r.row() for r in results]
    if csv_path:
        with open(csv_path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=RESULT_COLUMNS)
            w.writeheader()
            w.writerows(rows)
    if json_path:
        with open(json_path, "w") as f:
            json.dump([{**r, "counts": {k: v for k, v in asdict(res).items() if k in ("tp", "fp", "fn")}}
                       for r, res in zip(rows, results)], f, indent=2)
    return rows
