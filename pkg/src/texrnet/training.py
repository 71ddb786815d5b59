"""Training loop, evaluation and the ablation runner."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .annotations import load_dataset
from .backbone import build_backbone, load_checkpoint, param_count, save_checkpoint
from .config import TrainConfig
from .data import BatchSampler, load_items
from .glyph import CharClassifier, discriminator_loss, param_hash
from .losses import LossWeights, NonFiniteLoss, cross_entropy, total_loss, weighted_cross_entropy
from .metrics import EvalResult, MetricAccumulator, write_results
from .refine import TexRNet, upsample

log = logging.getLogger(__name__)

MAX_CONSECUTIVE_SKIPS = 3


class TrainingAborted(RuntimeError):
    pass


def lr_at(t, cfg):
    """Linear warmup to ``base_lr`` then poly decay to zero at ``iterations``."""
    T, W, base = cfg.iterations, cfg.warmup, cfg.base_lr
    if t < W:
        return base * (t + 1) / W
    frac = min(max((t - W) / (T - W), 0.0), 1.0)
    return base * (1.0 - frac) ** cfg.poly_power


def build_model(cfg):
    backbone = build_backbone(cfg.backbone, m=cfg.backbone_m, width=cfg.backbone_width)
    return TexRNet(backbone, c=2, kappa=cfg.kappa, key_norm=cfg.key_norm,
                   attention=cfg.attention, refine=cfg.refine, fuse_width=cfg.fuse_width)


def load_model(path):
    state, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["config"])
    model = build_model(cfg)
    model.load_state_dict(state)
    model.eval()
    return model, cfg, meta


def load_classifier(path):
    state, _ = load_checkpoint(path)
    clf = CharClassifier()
    clf.load_state_dict(state)
    return clf.freeze()


def compute_losses(model_out, batch, cfg, clf=None):
    """LossReport for one batch, honouring the config toggles.

    Wiring: ``L_sem`` and ``L_dis`` act on the initial prediction ``x'_sem``;
    ``L_rfn`` and ``L_tri`` act on the refined logits at image resolution.
    """
    gt, ignore = batch["mask"], batch["ignore"]
    size = gt.shape[-2:]
    if cfg.refine:
        small = model_out["x_sem_prob"].shape[-2:]
        gt_small = F.interpolate(gt[:, None].float(), size=small, mode="nearest")[:, 0].long()
        ig_small = F.interpolate(ignore[:, None].float(), size=small, mode="nearest")[:, 0].bool()
        l_sem = cross_entropy(model_out["x_sem_prob"], gt_small, ig_small, input_is_probs=True)
    else:
        # plain classifier: its upsampled logits are the final output
        l_sem = cross_entropy(model_out["logits_up"], gt, ignore)

    l_rfn = l_tri = l_dis = 0.0
    if cfg.refine:
        l_rfn = cross_entropy(model_out["logits_up"], gt, ignore)
        if cfg.trimap_loss:
            w = (batch["trimap"] & ~ignore).to(model_out["logits_up"].dtype)
            l_tri = weighted_cross_entropy(model_out["logits_up"], gt, w)
    if cfg.discriminator_loss:
        if clf is None:
            raise ValueError("discriminator loss enabled without a glyph classifier")
        fg = upsample(model_out["x_sem_prob"], size)[:, 1]
        l_dis = discriminator_loss(fg, batch["chars"], clf)
    weights = LossWeights(cfg.alpha, cfg.beta, cfg.gamma)
    return total_loss(l_sem, l_rfn, l_tri, l_dis, weights, cfg.toggles())


@dataclass
class RunLog:
    path: str
    records: list = field(default_factory=list)

    def append(self, rec):
        if self.records and rec["iteration"] <= self.records[-1]["iteration"]:
            raise ValueError("iterations in the run log must increase")
        self.records.append(rec)
        with open(self.path, "a") as f:
            f.write(json.dumps(rec) + "\n")


def _seed_everything(seed):
    torch.manual_seed(seed)
    np.random.seed(seed % (2**32))
    torch.use_deterministic_algorithms(True)


def _make_optimizer(model, cfg):
    return torch.optim.SGD([p for p in model.parameters() if p.requires_grad], lr=cfg.base_lr,
                           momentum=cfg.momentum, weight_decay=cfg.weight_decay)


def train(cfg, items=None, clf=None):
    """Train a model per ``cfg``; returns ``(model, RunLog, checkpoint path)``.

    ``items`` and ``clf`` may be passed in to reuse already-loaded data or a
    classifier; otherwise they are loaded from ``cfg``.
    """
    if not cfg.data_roots and items is None:
        raise ValueError("no dataset roots configured")
    os.makedirs(cfg.out_dir, exist_ok=True)
    _seed_everything(cfg.seed)
    if items is None:
        items = load_items(cfg.data_roots, cfg.train_split, cfg.trimap_radius)
    if cfg.discriminator_loss and clf is None:
        if not cfg.glyph_ckpt:
            raise ValueError("discriminator_loss needs glyph_ckpt pointing at a pretrained classifier")
        clf = load_classifier(cfg.glyph_ckpt)
    if cfg.discriminator_loss and not any(it.chars for it in items):
        raise ValueError("discriminator_loss needs character annotations in the training data")
    clf_hash = param_hash(clf) if clf is not None else None

    model = build_model(cfg)
    model.train()
    opt = _make_optimizer(model, cfg)
    sampler = BatchSampler(items, cfg.batch_size, cfg.crop_size, cfg.hflip, cfg.seed)
    ckpt_path = os.path.join(cfg.out_dir, "model.pt")
    log_path = os.path.join(cfg.out_dir, "log.jsonl")
    if os.path.exists(log_path):
        os.remove(log_path)
    runlog = RunLog(log_path)
    start = time.time()
    skips = 0
    for t in range(cfg.iterations):
        lr = lr_at(t, cfg)
        for g in opt.param_groups:
            g["lr"] = lr
        batch = sampler.next_batch()
        out = model(batch["image"])
        try:
            report = compute_losses(out, batch, cfg, clf)
        except NonFiniteLoss as e:
            skips += 1
            log.warning("iteration %d skipped: %s", t, e)
            runlog.append({"iteration": t, "lr": lr, "skipped": str(e), "wall": time.time() - start})
            if skips >= MAX_CONSECUTIVE_SKIPS:
                raise TrainingAborted(f"{skips} consecutive non-finite losses at iteration {t}") from e
            continue
        skips = 0
        opt.zero_grad(set_to_none=True)
        report.total.backward()
        opt.step()
        if t % cfg.log_every == 0 or t == cfg.iterations - 1:
            runlog.append({"iteration": t, "lr": lr, "loss": report.as_floats(), "wall": time.time() - start})
        if cfg.ckpt_every and (t + 1) % cfg.ckpt_every == 0 and t + 1 < cfg.iterations:
            save_checkpoint(ckpt_path, model, cfg.to_dict(), t + 1, cfg.seed)
    model.eval()
    save_checkpoint(ckpt_path, model, cfg.to_dict(), cfg.iterations, cfg.seed,
                    param_count=param_count(model), root_coverage=dict(sampler.coverage))
    if clf is not None and param_hash(clf) != clf_hash:
        raise RuntimeError("glyph classifier parameters changed during training")
    return model, runlog, ckpt_path


@torch.no_grad()
def predict_dataset(model, samples):
    """Yield ``(sample, model outputs, predicted mask)`` one image at a time."""
    model.eval()
    for s in samples:
        img = torch.from_numpy(s.load_image().transpose(2, 0, 1).copy())[None]
        out = model(img)
        logits = out["logits_up"]
        pred = (logits[0, 1] > logits[0, 0]).numpy()
        yield s, out, pred


def evaluate_model(model, root, split, dataset_name=None):
    samples = load_dataset(root, split)
    if not samples:
        raise ValueError(f"split {split!r} in {root} is empty")
    acc = MetricAccumulator()
    for s, _, pred in predict_dataset(model, samples):
        acc.update(pred, s.masks.word_mask, s.ignore_mask(), s.sample_id)
    return acc.result(dataset_name or os.path.basename(os.path.normpath(root)), split), acc


def evaluate(checkpoint, root, split, out_dir=None):
    """Evaluate a checkpoint against word masks; writes CSV/JSON when ``out_dir`` is set."""
    model, _, _ = load_model(checkpoint)
    result, acc = evaluate_model(model, root, split)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_results([result], os.path.join(out_dir, f"eval_{split}.csv"), os.path.join(out_dir, f"eval_{split}.json"))
        with open(os.path.join(out_dir, f"eval_{split}_per_image.json"), "w") as f:
            json.dump(acc.per_image, f, indent=1)
    return result


def evaluate_masks(samples, preds):
    """Score precomputed binary predictions; used to replay ground truth."""
    acc = MetricAccumulator()
    for s, p in zip(samples, preds):
        acc.update(p, s.masks.word_mask, s.ignore_mask(), s.sample_id)
    return acc.result()


# ---------------------------------------------------------------------------
# ablation

ABLATION_ROWS = [
    ("Baseline (1x1 head)", dict(refine=False, attention=False, trimap_loss=False, discriminator_loss=False)),
    ("TexRNet (base)", dict(refine=True, attention=False, trimap_loss=False, discriminator_loss=False)),
    ("TexRNet +Att", dict(refine=True, attention=True, trimap_loss=False, discriminator_loss=False)),
    ("TexRNet +Att +L_tri", dict(refine=True, attention=True, trimap_loss=True, discriminator_loss=False)),
    ("TexRNet (final)", dict(refine=True, attention=True, trimap_loss=True, discriminator_loss=True)),
]

# fgIoU / F-score of the same five rows on the real dataset with a large backbone
REFERENCE_TABLE = [(84.07, 0.914), (84.86, 0.917), (85.36, 0.919), (85.55, 0.921), (86.06, 0.921)]


@dataclass
class AblationRow:
    name: str
    attention: bool
    trimap: bool
    discriminator: bool
    seed: int
    fgIoU: float  # x100
    fscore: float
    params: int


def ablate(cfg, seeds=(0,), clf=None, eval_root=None):
    """Train the five incremental variants for every seed and evaluate each.

    All runs share ``cfg`` (schedule, data, seed) except the toggles.
    Returns a list of :class:`AblationRow`.
    """
    items = load_items(cfg.data_roots, cfg.train_split, cfg.trimap_radius)
    if clf is None:
        if not cfg.glyph_ckpt:
            raise ValueError("ablation needs a pretrained glyph classifier (glyph_ckpt)")
        clf = load_classifier(cfg.glyph_ckpt)
    eval_root = eval_root or cfg.data_roots[0]
    rows = []
    for seed in seeds:
        for name, toggles in ABLATION_ROWS:
            run_dir = os.path.join(cfg.out_dir, f"seed{seed}", name.replace(" ", "_").replace("(", "").replace(")", "").replace("+", ""))
            run_cfg = cfg.replace(seed=seed, out_dir=run_dir, **toggles)
            log.info("ablation run %s seed %d", name, seed)
            model, _, _ = train(run_cfg, items=items, clf=clf if run_cfg.discriminator_loss else None)
            res, _ = evaluate_model(model, eval_root, cfg.eval_split)
            rows.append(AblationRow(name, toggles["attention"], toggles["trimap_loss"], toggles["discriminator_loss"],
                                    seed, 100.0 * res.fgIoU, res.fscore, param_count(model)))
    return rows


def summarize_ablation(rows):
    """Median over seeds per row name, in table order."""
    out = []
    for i, (name, _) in enumerate(ABLATION_ROWS):
        sel = [r for r in rows if r.name == name]
        if not sel:
            continue
        out.append({
            "method": name,
            "att": sel[0].attention,
            "L_tri": sel[0].trimap,
            "L_dis": sel[0].discriminator,
            "fgIoU": float(np.median([r.fgIoU for r in sel])),
            "F-score": float(np.median([r.fscore for r in sel])),
            "params": sel[0].params,
            "n_seeds": len(sel),
            "reference_fgIoU": REFERENCE_TABLE[i][0],
            "reference_F-score": REFERENCE_TABLE[i][1],
        })
    return out
