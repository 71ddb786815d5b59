"""Diagnostic reports: similarity vs accuracy, activation maps, ablation and dataset tables.

Every report writes delimited data (CSV/JSON) next to its PNG figures.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.stats import spearmanr

from . import plotting
from .annotations import dataset_stats, load_dataset
from .metrics import fg_iou
from .refine import activation_delta, upsample
from .training import load_model, predict_dataset

log = logging.getLogger(__name__)


def _model(model_or_path):
    if isinstance(model_or_path, (str, os.PathLike)):
        return load_model(model_or_path)[0]
    return model_or_path.eval()


def _write_csv(path, rows, columns):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        w.writerows(rows)


def spearman(x, y):
    """Rank correlation, or ``(None, reason)`` when it is undefined."""
    if len(x) < 3:
        return None, "fewer_than_3_images"
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None, "constant_values"
    rho = float(spearmanr(x, y).statistic)
    if not np.isfinite(rho):
        return None, "degenerate_ranks"
    return rho, None


@dataclass
class CossimReport:
    rows: list
    rho: float | None
    flag: str | None
    files: dict = field(default_factory=dict)

    @property
    def trend_negative(self):
        return self.rho is not None and self.rho <= 0


def cossim_pairs(model, samples):
    rows = []
    for s, out, pred in predict_dataset(model, samples):
        iou, empty = fg_iou(pred, s.masks.word_mask, s.ignore_mask(), return_flag=True)
        rows.append({"sample_id": s.sample_id, "cossim_01": float(out["X"][0, 0, 1]), "fgIoU": float(iou),
                     "empty_union": bool(empty)})
    return rows


def cossim_report(model_or_path, root, split="test", out_dir=None):
    """Per-image off-diagonal similarity of the initial prediction against fgIoU."""
    model = _model(model_or_path)
    if model.head.c != 2:
        raise ValueError("the similarity report expects two classes")
    samples = load_dataset(root, split)
    rows = cossim_pairs(model, samples)
    x = np.array([r["cossim_01"] for r in rows])
    y = np.array([r["fgIoU"] for r in rows])
    rho, flag = spearman(x, y)
    if flag:
        log.warning("spearman correlation undefined: %s", flag)
    elif rho > 0:
        log.warning("soft check: expected a non-positive trend, got rho=%.3f", rho)
    else:
        log.info("soft check passed: rho=%.3f", rho)
    rep = CossimReport(rows, rho, flag)
    if out_dir:
        rep.files["csv"] = os.path.join(out_dir, f"cossim_{split}.csv")
        _write_csv(rep.files["csv"], rows, ["sample_id", "cossim_01", "fgIoU", "empty_union"])
        rep.files["json"] = os.path.join(out_dir, f"cossim_{split}_summary.json")
        with open(rep.files["json"], "w") as f:
            json.dump({"n_images": len(rows), "spearman_rho": rho, "flag": flag,
                       "negative_trend": rep.trend_negative}, f, indent=1)
        rep.files["png"] = plotting.cossim_scatter(x, y, rho, os.path.join(out_dir, f"cossim_{split}.png"))
    return rep


def activation_report(model_or_path, root, split="test", out_dir="activation", n_images=4):
    """Dump initial, attention and delta maps for the first ``n_images`` samples.

    Writes one ``.npy`` per map (foreground channel, feature resolution), a PNG
    per map and a summary grid. Returns the list of written paths.
    """
    model = _model(model_or_path)
    if not model.head.attention:
        raise ValueError("activation report needs a model with attention enabled")
    samples = load_dataset(root, split)[:n_images]
    if not samples:
        raise ValueError(f"split {split!r} in {root} is empty")
    os.makedirs(out_dir, exist_ok=True)
    written, grid = [], []
    for s, out, _ in predict_dataset(model, samples):
        init, att = out["x_sem_prob"][0], out["x_att"][0]
        delta = activation_delta(att.flatten(1), init.flatten(1)).view_as(att)
        maps = {"initial": init[1].numpy(), "attention": att[1].numpy(), "delta": delta[1].numpy()}
        for name, arr in maps.items():
            base = os.path.join(out_dir, f"{s.sample_id}_{name}")
            np.save(base + ".npy", arr)
            written += [base + ".npy", plotting.single_map(arr, base + ".png", signed=name == "delta")]
        size = (s.height, s.width)
        grid.append({
            "image": s.load_image(),
            "gt": s.masks.word_mask.astype(float),
            "initial": upsample(init[None], size)[0, 1].numpy(),
            "delta": upsample(delta[None], size)[0, 1].numpy(),
            "refined": torch.softmax(out["logits_up"][0], 0)[1].numpy(),
        })
    written.append(plotting.activation_grid(grid, os.path.join(out_dir, "activation_grid.png")))
    return written


ABLATION_COLUMNS = ["method", "att", "L_tri", "L_dis", "fgIoU", "F-score", "params", "n_seeds",
                    "reference_fgIoU", "reference_F-score"]


def write_ablation(rows, table, out_dir):
    """Per-run CSV, the summary table as CSV/JSON, and two figures."""
    os.makedirs(out_dir, exist_ok=True)
    runs = [dataclasses.asdict(r) for r in rows]
    files = {
        "runs_csv": os.path.join(out_dir, "ablation_runs.csv"),
        "table_csv": os.path.join(out_dir, "ablation_table.csv"),
        "table_json": os.path.join(out_dir, "ablation_table.json"),
    }
    if runs:
        _write_csv(files["runs_csv"], runs, list(runs[0]))
    _write_csv(files["table_csv"], table, ABLATION_COLUMNS)
    with open(files["table_json"], "w") as f:
        json.dump(table, f, indent=1)
    files["bars_png"] = plotting.ablation_bars(table, os.path.join(out_dir, "ablation_fgiou.png"))
    files["params_png"] = plotting.params_vs_iou(table, os.path.join(out_dir, "ablation_params.png"))
    return files


def stats_report(root, split, out_dir):
    rep = dataset_stats(load_dataset(root, split))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"stats_{split}.json")
    with open(path, "w") as f:
        json.dump(rep.to_dict(), f, indent=1)
    png = plotting.stats_histograms(rep, os.path.join(out_dir, f"stats_{split}.png"))
    return rep, {"json": path, "png": png}
