"""Matplotlib figures for the reports; everything renders off-screen to files."""

from __future__ import annotations

import os
from math import sqrt

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (sqrt(5.0) - 1.0) / 2.0
COLUMN_WIDTH = 3.4  # inches
PALETTE = ["#08589e", "#2b8cbe", "#4eb3d3", "#7bccc4", "#a8ddb5"]

RC = {
    "axes.prop_cycle": matplotlib.cycler(color=PALETTE),
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 8,
    "font.family": "serif",
    "mathtext.fontset": "stix",
    "legend.fontsize": 7,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.dpi": 150,
    "savefig.dpi": 200,
    "savefig.bbox": "tight",
}


def figsize(width=COLUMN_WIDTH, ratio=GOLDEN):
    return (width, width * ratio)


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def cossim_scatter(x01, iou, rho, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        ax.scatter(x01, iou, s=8, alpha=0.8, edgecolors="none")
        ax.set_xlabel(r"CosSim$(x'_{sem})_{01}$")
        ax.set_ylabel("per-image fgIoU")
        label = "undefined" if rho is None else f"{rho:.3f}"
        ax.set_title(rf"Spearman $\rho$ = {label}", fontsize=8)
        return _save(fig, path)


def activation_grid(rows, path):
    """``rows``: list of dicts with image, gt, initial, delta, refined arrays (H, W[, 3])."""
    cols = [("image", None), ("gt", "gray"), ("initial", "viridis"), ("delta", "bwr"), ("refined", "viridis")]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(len(rows), len(cols), figsize=(2 * COLUMN_WIDTH, 0.42 * COLUMN_WIDTH * len(rows)),
                                 squeeze=False)
        for r, row in enumerate(rows):
            for c, (key, cmap) in enumerate(cols):
                ax = axes[r, c]
                if key == "delta":
                    lim = max(float(np.abs(row[key]).max()), 1e-6)
                    ax.imshow(row[key], cmap=cmap, vmin=-lim, vmax=lim, interpolation="nearest")
                elif cmap is None:
                    ax.imshow(row[key], interpolation="nearest")
                else:
                    ax.imshow(row[key], cmap=cmap, vmin=0, vmax=1, interpolation="nearest")
                ax.set_xticks([])
                ax.set_yticks([])
                if r == 0:
                    ax.set_title(key, fontsize=8)
        return _save(fig, path)


def single_map(arr, path, cmap="viridis", signed=False):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize(1.6, 1.0))
        if signed:
            lim = max(float(np.abs(arr).max()), 1e-6)
            im = ax.imshow(arr, cmap="bwr", vmin=-lim, vmax=lim, interpolation="nearest")
        else:
            im = ax.imshow(arr, cmap=cmap, interpolation="nearest")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        ax.set_axis_off()
        return _save(fig, path)


def ablation_bars(table, path):
    names = [r["method"] for r in table]
    vals = [r["fgIoU"] for r in table]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize(2 * COLUMN_WIDTH, 0.35))
        y = np.arange(len(names))
        ax.barh(y, vals, color=PALETTE[: len(names)])
        ax.set_yticks(y)
        ax.set_yticklabels(names)
        ax.invert_yaxis()
        lo = min(vals) if vals else 0
        ax.set_xlim(max(0.0, lo - 5), 100)
        ax.set_xlabel("fgIoU (median over seeds)")
        for yi, v in zip(y, vals):
            ax.text(v, yi, f" {v:.2f}", va="center", fontsize=7)
        return _save(fig, path)


def params_vs_iou(table, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        for r in table:
            ax.scatter(r["params"] / 1e3, r["fgIoU"], s=14)
            ax.annotate(r["method"], (r["params"] / 1e3, r["fgIoU"]), fontsize=6, xytext=(3, 2),
                        textcoords="offset points")
        ax.set_xlabel("trainable parameters (k)")
        ax.set_ylabel("fgIoU")
        return _save(fig, path)


def stats_histograms(report, path):
    panels = [
        ("words per image", report.words_per_image),
        ("chars per image", report.chars_per_image),
    ]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(2, 2, figsize=figsize(2 * COLUMN_WIDTH, 0.7))
        for ax, (title, hist) in zip(axes[0], panels):
            keys = sorted(hist)
            ax.bar(keys, [hist[k] for k in keys], color=PALETTE[1])
            ax.set_title(title, fontsize=8)
        ax = axes[1, 0]
        bins = np.linspace(0, max([0.01] + list(report.word_coverage) + list(report.effect_coverage)), 20)
        ax.hist(report.word_coverage, bins=bins, alpha=0.7, label="word")
        ax.hist(report.effect_coverage, bins=bins, alpha=0.7, label="word-effect")
        ax.set_title("mask coverage ratio", fontsize=8)
        ax.legend()
        ax = axes[1, 1]
        freq = report.letter_frequency
        ax.bar(np.arange(len(freq)), freq, color=PALETTE[2])
        ax.set_title("class frequency", fontsize=8)
        ax.set_xlabel("class id")
        fig.tight_layout()
        return _save(fig, path)


def loss_curves(records, path):
    its = [r["iteration"] for r in records if "loss" in r]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        if its:
            keys = list(next(r for r in records if "loss" in r)["loss"])
            for k in keys:
                ax.plot(its, [r["loss"][k] for r in records if "loss" in r], label=k)
            ax.legend()
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        return _save(fig, path)
