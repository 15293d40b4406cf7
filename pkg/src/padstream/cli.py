"""Command-line interface: generate / train / evaluate / predict.

Exit codes are a stable contract: 0 success, 2 config or usage problem,
3 missing artifact (dataset, run dir, checkpoint), 4 bad input data.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

import torch

from . import config as cfgmod
from .dataset import (
    LABELS,
    dataset_tree_hash,
    list_clip_dirs,
    read_clip,
    read_label,
    split_clip_ids,
    write_json,
    read_json,
)
from .errors import ConfigError, DataError, MissingArtifact, PadstreamError
from .metrics import sweep_threshold
from .plots import save_error_tradeoff, save_score_histogram, save_training_curves
from .preprocess import preprocess_clip
from .synthetic import generate_dataset
from .tensorfile import load_checkpoint, save_checkpoint
from .training import evaluate_models, prepare_clips, train_branch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_BAD_DATA = 4

FUSION_MODES = ("sum", "multi-only", "diff-only")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_config(args, parser) -> cfgmod.RunConfig:
    if args.config is not None:
        if not os.path.isfile(args.config):
            parser.error(f"config file not found: {args.config}")
        cfg = cfgmod.load_config(args.config)
    else:
        cfg = cfgmod.RunConfig()
    overrides = {
        name: getattr(args, name, None)
        for name in (
            "seed",
            "epochs",
            "k",
            "out_size",
            "fpm_direction_multi",
            "fpm_direction_diff",
            "dataset_dir",
            "run_dir",
        )
    }
    ppm = getattr(args, "ppm", None)
    if ppm is not None:
        overrides["ppm"] = ppm == "on"
    return cfgmod.apply_overrides(cfg, **overrides)


def _split_dataset(cfg: cfgmod.RunConfig, dataset_dir: str):
    clip_dirs = list_clip_dirs(dataset_dir)
    if not clip_dirs:
        raise MissingArtifact(f"no clips found under {dataset_dir}")
    labelled = [(os.path.basename(d), read_label(d)) for d in clip_dirs]
    train_ids, test_ids = split_clip_ids(labelled, cfg.train_fraction)
    by_id = {os.path.basename(d): d for d in clip_dirs}
    return [by_id[i] for i in train_ids], [by_id[i] for i in test_ids]


def _prepare_split(cfg: cfgmod.RunConfig, dirs, cache_dir):
    return prepare_clips(
        (read_clip(d) for d in dirs), cfg.preprocess, cache_dir=cache_dir
    )


def _save_model(path, model, cfg: cfgmod.RunConfig, seed: int):
    tensors = {
        name: value.detach().cpu().numpy()
        for name, value in model.state_dict().items()
    }
    save_checkpoint(path, tensors, cfgmod.config_to_dict(cfg), seed)


def _load_model(path, build):
    meta, tensors = load_checkpoint(path)
    model = build()
    state = {name: torch.from_numpy(arr) for name, arr in tensors.items()}
    model.load_state_dict(state)
    model.eval()
    return model, meta


def cmd_generate(args, parser) -> int:
    cfg = _load_config(args, parser)
    out_dir = args.out or cfg.paths.dataset_dir
    clip_ids = generate_dataset(cfg.synth, out_dir)
    print(f"wrote {len(clip_ids)} clips ({cfg.synth.clips_per_class} per class, "
          f"{len(LABELS)} classes) to {out_dir}")
    return EXIT_OK


def cmd_train(args, parser) -> int:
    cfg = _load_config(args, parser)
    dataset_dir = args.dataset or cfg.paths.dataset_dir
    if not os.path.isdir(dataset_dir):
        raise MissingArtifact(f"dataset directory not found: {dataset_dir}")
    run_dir = args.run or cfg.paths.run_dir
    os.makedirs(run_dir, exist_ok=True)

    train_dirs, test_dirs = _split_dataset(cfg, dataset_dir)
    cache_dir = os.path.join(run_dir, "cache")
    train_clips = _prepare_split(cfg, train_dirs, cache_dir)
    test_clips = _prepare_split(cfg, test_dirs, cache_dir)

    write_json(os.path.join(run_dir, "config.json"), cfgmod.config_to_dict(cfg))

    branches = ("multi", "diff") if args.branch == "both" else (args.branch,)
    histories = {}
    outputs = []
    k = cfg.preprocess.k
    for branch in branches:
        if branch == "multi":
            model = cfgmod.build_multi_model_from(cfg)
            seed = cfg.train.seed
        else:
            model = cfgmod.build_diff_model_from(cfg)
            seed = cfg.train.seed + cfgmod.DIFF_SEED_OFFSET
        history_path = os.path.join(run_dir, f"history_{branch}.jsonl")
        if os.path.exists(history_path):
            os.remove(history_path)

        def _log(br, row):
            if not args.quiet:
                print(
                    f"[{br}] epoch {row['epoch']:3d}  loss {row['loss']:.4f}  "
                    f"train_acc {row['train_accuracy']:.3f}  eval_acer {row['eval']['acer']:.3f}",
                    flush=True,
                )

        history = train_branch(
            branch,
            model,
            train_clips,
            cfg.train,
            k,
            eval_clips=test_clips,
            history_path=history_path,
            log=_log,
        )
        ckpt_path = os.path.join(run_dir, f"{branch}.ckpt")
        _save_model(ckpt_path, model, cfg, seed)
        histories[branch] = history
        outputs.extend([ckpt_path, history_path])
        print(
            f"{branch}: best eval ACER {history.best_acer:.4f} at epoch "
            f"{history.best_epoch} ({history.seconds_total:.1f}s)"
        )

    curves_path = os.path.join(run_dir, "training_curves.png")
    save_training_curves(curves_path, histories)
    outputs.append(curves_path)

    write_json(
        os.path.join(run_dir, "manifest.json"),
        {
            "command": "train",
            "config": cfgmod.config_to_dict(cfg),
            "seed": cfg.train.seed,
            "dataset_hash": dataset_tree_hash(dataset_dir, exclude=("manifest.json",)),
            "created_utc": _utc_now(),
            "outputs": sorted(os.path.basename(p) for p in outputs),
        },
    )
    return EXIT_OK


def cmd_evaluate(args, parser) -> int:
    run_dir = args.run
    config_path = os.path.join(run_dir, "config.json")
    if not os.path.isdir(run_dir) or not os.path.isfile(config_path):
        raise MissingArtifact(f"run directory (with config.json) not found: {run_dir}")
    cfg = cfgmod.config_from_dict(read_json(config_path))
    dataset_dir = args.dataset or cfg.paths.dataset_dir
    if not os.path.isdir(dataset_dir):
        raise MissingArtifact(f"dataset directory not found: {dataset_dir}")

    multi_model = diff_model = None
    if args.fusion in ("sum", "multi-only"):
        multi_model, _ = _load_model(
            os.path.join(run_dir, "multi.ckpt"), lambda: cfgmod.build_multi_model_from(cfg)
        )
    if args.fusion in ("sum", "diff-only"):
        diff_model, _ = _load_model(
            os.path.join(run_dir, "diff.ckpt"), lambda: cfgmod.build_diff_model_from(cfg)
        )

    train_dirs, test_dirs = _split_dataset(cfg, dataset_dir)
    chosen = {"train": train_dirs, "test": test_dirs, "all": train_dirs + test_dirs}[args.split]
    clips = _prepare_split(cfg, chosen, None)

    report, rows = evaluate_models(
        clips,
        multi_model=multi_model,
        diff_model=diff_model,
        k=cfg.preprocess.k,
        threshold=args.threshold,
    )

    out_dir = args.out or os.path.join(run_dir, f"eval-{args.fusion}-{args.split}")
    os.makedirs(out_dir, exist_ok=True)

    payload = report.to_dict()
    payload["fusion"] = args.fusion
    payload["branch"] = {"sum": "both", "multi-only": "multi", "diff-only": "diff"}[args.fusion]
    payload["split"] = args.split
    metrics_path = os.path.join(out_dir, "metrics.json")
    write_json(metrics_path, payload)
    print(json.dumps(payload, indent=2, sort_keys=True))

    scores_path = os.path.join(out_dir, "scores.csv")
    fieldnames = sorted({key for row in rows for key in row})
    with open(scores_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)

    eer_threshold, curve = sweep_threshold(
        [row["live_sum"] for row in rows], [row["label"] == "live" for row in rows]
    )
    tradeoff_path = os.path.join(out_dir, "error_tradeoff.png")
    save_error_tradeoff(tradeoff_path, curve, report.threshold)
    hist_path = os.path.join(out_dir, "score_hist.png")
    save_score_histogram(hist_path, rows, report.threshold)

    write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "command": "evaluate",
            "config": cfgmod.config_to_dict(cfg),
            "seed": cfg.train.seed,
            "dataset_hash": dataset_tree_hash(dataset_dir, exclude=("manifest.json",)),
            "created_utc": _utc_now(),
            "fusion": args.fusion,
            "split": args.split,
            "eer_threshold": eer_threshold,
            "outputs": sorted(
                os.path.basename(p)
                for p in (metrics_path, scores_path, tradeoff_path, hist_path)
            ),
        },
    )
    return EXIT_OK


def cmd_predict(args, parser) -> int:
    run_dir = args.run
    config_path = os.path.join(run_dir, "config.json")
    if not os.path.isdir(run_dir) or not os.path.isfile(config_path):
        raise MissingArtifact(f"run directory (with config.json) not found: {run_dir}")
    cfg = cfgmod.config_from_dict(read_json(config_path))
    multi_model, _ = _load_model(
        os.path.join(run_dir, "multi.ckpt"), lambda: cfgmod.build_multi_model_from(cfg)
    )
    diff_model, _ = _load_model(
        os.path.join(run_dir, "diff.ckpt"), lambda: cfgmod.build_diff_model_from(cfg)
    )

    clip = read_clip(args.clip)
    seq, diff = preprocess_clip(clip, cfg.preprocess)
    with torch.no_grad():
        multi_pair = multi_model.score(torch.from_numpy(seq.frames[None]))[0]
        diff_pair = diff_model.score(torch.from_numpy(diff.diffs[None]))[0]
    live_sum = multi_pair.live + diff_pair.live
    spoof_sum = multi_pair.spoof + diff_pair.spoof
    payload = {
        "clip_id": clip.clip_id,
        "multi": {"live": multi_pair.live, "spoof": multi_pair.spoof},
        "diff": {"live": diff_pair.live, "spoof": diff_pair.spoof},
        "live_sum": live_sum,
        "spoof_sum": spoof_sum,
        "threshold": 1.0,
        "decision": "live" if live_sum > 1.0 else "spoof",
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="padstream",
        description="Two-stream video anti-spoofing on synthetic clips.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="YAML config file (defaults are used if omitted)")
        p.add_argument("--seed", type=int, help="override train + data seed")

    p_gen = sub.add_parser("generate", help="write a synthetic dataset")
    add_common(p_gen)
    p_gen.add_argument("--out", help="dataset output directory (default: config paths.dataset_dir)")

    p_train = sub.add_parser("train", help="train one or both branches")
    add_common(p_train)
    p_train.add_argument("--dataset", help="dataset directory")
    p_train.add_argument("--run", help="run output directory")
    p_train.add_argument("--branch", choices=("multi", "diff", "both"), default="both")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--k", type=int, help="number of keyframe stacks")
    p_train.add_argument("--out-size", dest="out_size", type=int)
    p_train.add_argument(
        "--fpm-direction-multi", choices=("coarse_to_fine", "fine_to_coarse")
    )
    p_train.add_argument(
        "--fpm-direction-diff", choices=("coarse_to_fine", "fine_to_coarse")
    )
    p_train.add_argument("--ppm", choices=("on", "off"))
    p_train.add_argument("--quiet", action="store_true")

    p_eval = sub.add_parser("evaluate", help="evaluate a trained run")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--dataset")
    p_eval.add_argument("--fusion", choices=FUSION_MODES, default="sum")
    p_eval.add_argument("--split", choices=("train", "test", "all"), default="test")
    p_eval.add_argument("--threshold", type=float)
    p_eval.add_argument("--out", help="output directory (default: inside the run dir)")

    p_pred = sub.add_parser("predict", help="score a single clip directory")
    p_pred.add_argument("--run", required=True)
    p_pred.add_argument("--clip", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "predict": cmd_predict,
    }
    try:
        return handlers[args.command](args, parser)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DataError as exc:
        print(f"bad input data: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA
    except PadstreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
