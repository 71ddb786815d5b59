"""Command line entry point: ``texrnet <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import DATA_ROOT_ENV, load_config


def _data_root(args):
    root = args.data or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise SystemExit(f"no dataset root: pass --data or set {DATA_ROOT_ENV}")
    return root


def cmd_synth(args):
    from .synthdata import generate_split, preset

    cfg = preset(args.preset, seed=args.seed)
    manifest = generate_split(cfg, args.n, args.out, args.split)
    print(json.dumps({k: manifest[k] for k in ("root", "split", "n", "seed")}))
    return 0


def cmd_validate(args):
    from .annotations import DatasetError, errors_only, load_dataset, validate_sample

    root = _data_root(args)
    n_err = n_warn = 0
    for split in args.split:
        try:
            samples = load_dataset(root, split)
        except DatasetError as e:
            print(f"ERROR {e}")
            return 1
        for s in samples:
            found = validate_sample(s, strict_char_mask=args.strict)
            for v in found:
                print(f"{v.severity.upper()} {s.sample_id} {v.code}: {v.message}")
            errs = len(errors_only(found))
            n_err += errs
            n_warn += len(found) - errs
        print(f"{split}: {len(samples)} samples checked")
    print(f"{n_err} errors, {n_warn} warnings")
    return 1 if n_err else 0


def cmd_stats(args):
    from .reports import stats_report

    rep, files = stats_report(_data_root(args), args.split, args.out)
    print(json.dumps({"n_images": rep.n_images, "total_words": rep.total_words, "total_chars": rep.total_chars,
                      **files}))
    return 0


def cmd_pretrain_glyph(args):
    from .annotations import load_dataset
    from .backbone import save_checkpoint
    from .glyph import gt_char_dataset, param_hash, pretrain_classifier

    root = _data_root(args)
    P, L = gt_char_dataset(load_dataset(root, args.train_split))
    Pv, Lv = gt_char_dataset(load_dataset(root, args.val_split))
    clf, acc = pretrain_classifier(P, L, Pv, Lv, epochs=args.epochs, seed=args.seed)
    save_checkpoint(args.out, clf, {"epochs": args.epochs}, seed=args.seed, accuracy=acc, param_hash=param_hash(clf))
    print(json.dumps({"checkpoint": args.out, "val_accuracy": acc, "n_train": len(L), "n_val": len(Lv)}))
    return 0


def _config(args):
    overrides = {}
    if getattr(args, "out_dir", None):
        overrides["out_dir"] = args.out_dir
    return load_config(args.config, **overrides)


def cmd_train(args):
    from . import plotting
    from .config import dump_config
    from .training import evaluate_model, train

    cfg = _config(args)
    model, runlog, ckpt = train(cfg)
    dump_config(cfg, os.path.join(cfg.out_dir, "config.ini"))
    plotting.loss_curves(runlog.records, os.path.join(cfg.out_dir, "loss.png"))
    out = {"checkpoint": ckpt}
    if args.eval:
        res, _ = evaluate_model(model, cfg.data_roots[0], cfg.eval_split)
        out["eval"] = res.row()
    print(json.dumps(out))
    return 0


def cmd_eval(args):
    from .training import evaluate

    res = evaluate(args.ckpt, _data_root(args), args.split, args.out)
    print(json.dumps(res.row()))
    return 0


def cmd_ablate(args):
    from .reports import write_ablation
    from .training import ablate, summarize_ablation

    cfg = _config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    rows = ablate(cfg, seeds=seeds)
    table = summarize_ablation(rows)
    files = write_ablation(rows, table, cfg.out_dir)
    for r in table:
        print(f"{r['method']:<22} fgIoU {r['fgIoU']:6.2f}  F {r['F-score']:.3f}  (reference {r['reference_fgIoU']:.2f})")
    print(json.dumps(files))
    return 0


def cmd_report(args):
    from .reports import activation_report, cossim_report

    root = _data_root(args)
    if args.kind == "cossim":
        rep = cossim_report(args.ckpt, root, args.split, args.out)
        print(json.dumps({"n_images": len(rep.rows), "spearman_rho": rep.rho, "flag": rep.flag, **rep.files}))
    else:
        files = activation_report(args.ckpt, root, args.split, args.out, n_images=args.n)
        print(json.dumps({"files": len(files), "grid": files[-1]}))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="texrnet", description="Text segmentation with a refinement head.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic split")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--preset", choices=["easy", "hard"], default="easy")
    s.add_argument("--out", required=True)
    s.add_argument("--split", choices=["train", "val", "test"], default="train")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("validate", help="check annotations of one or more splits")
    s.add_argument("--data")
    s.add_argument("--split", nargs="+", default=["train", "val", "test"])
    s.add_argument("--strict", action="store_true", help="treat char-mask mismatches as errors")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", help="dataset statistics as JSON and histograms")
    s.add_argument("--data")
    s.add_argument("--split", default="train")
    s.add_argument("--out", default="stats")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("pretrain-glyph", help="train the frozen character classifier")
    s.add_argument("--data")
    s.add_argument("--train-split", default="train")
    s.add_argument("--val-split", default="val")
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="glyph.pt")
    s.set_defaults(func=cmd_pretrain_glyph)

    s = sub.add_parser("train", help="train a segmentation model")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir")
    s.add_argument("--eval", action="store_true", help="evaluate on eval_split afterwards")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data")
    s.add_argument("--split", default="test")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="run the five-row component ablation")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir")
    s.add_argument("--seeds", help="comma separated, default: the config seed")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("report", help="diagnostic reports")
    s.add_argument("kind", choices=["cossim", "activation"])
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data")
    s.add_argument("--split", default="test")
    s.add_argument("--out", default="report")
    s.add_argument("--n", type=int, default=4, help="images for the activation report")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
