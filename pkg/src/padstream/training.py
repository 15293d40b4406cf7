"""Branch training and evaluation orchestration.

Both branches train independently: plain SGD with momentum on two-class
cross-entropy, step-decayed learning rate, seed-determined data order and
augmentation draws.  Clips are preprocessed once into PreparedClip records
(all frames registered/cropped/resized, plus the pairwise frame-deviation
matrix) so per-epoch keyframe re-selection and augmentation are cheap.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import (
    ConfigError,
    EmptyDataset,
    SingleClassDataset,
    TooFewFrames,
)
from .metrics import FusedScore, MetricsReport, compute_metrics, fuse_scores
from .preprocess import (
    FrameSequence,
    PreprocessConfig,
    deviation_matrix,
    preprocess_clip,
    register_and_crop,
    resize_bilinear,
    select_keyframes_from_deviations,
    stack_boundaries,
)
from .tensorfile import load_tensor, save_tensor

PIPELINE_VERSION = 1
BRANCHES = ("multi", "diff")


@dataclass(frozen=True)
class HyperParams:
    """Optimiser settings shared by both branches (batch size differs)."""

    lr: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.1
    lr_step: int = 50
    epochs: int = 120
    batch_multi: int = 8
    batch_diff: int = 16
    seed: int = 0
    spatial_augment: bool = True
    temporal_augment: bool = True
    early_stop_train_acc: float = None

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_multi < 1 or self.batch_diff < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr_step < 1:
            raise ConfigError(f"lr_step must be >= 1, got {self.lr_step}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class PreparedClip:
    """A clip after registration/crop/resize, ready for repeated sampling."""

    clip_id: str
    label: str
    frames: np.ndarray  # [N, S, S, 3] float32
    deviations: np.ndarray  # [N, N] float64, pairwise frame deviations pre-resize

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def is_live(self) -> bool:
        return self.label == "live"


@dataclass
class TrainHistory:
    """Per-epoch records of one branch's training run."""

    branch: str
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_acer: float = float("inf")
    seconds_total: float = 0.0

    @property
    def losses(self) -> list:
        return [row["loss"] for row in self.epochs]

    @property
    def final_train_accuracy(self) -> float:
        return self.epochs[-1]["train_accuracy"] if self.epochs else 0.0


def prepare_clip(raw, cfg: PreprocessConfig) -> PreparedClip:
    """Register, crop and resize every frame; keep the full deviation matrix.

    Selecting rows of .frames with keyframe indices reproduces exactly what
    preprocess_clip would produce for those indices (same per-frame resize).
    """
    cropped, _ = register_and_crop(raw.frames, raw.keypoints, cfg)
    dev = deviation_matrix(cropped)
    resized = np.stack(
        [resize_bilinear(cropped[i], cfg.out_size, cfg.out_size) for i in range(cropped.shape[0])]
    )
    return PreparedClip(
        clip_id=raw.clip_id, label=raw.label, frames=resized, deviations=dev
    )


def _cache_key(clip_id: str, cfg: PreprocessConfig) -> str:
    payload = json.dumps(
        {
            "clip": clip_id,
            "out_size": cfg.out_size,
            "crop_margin": cfg.crop_margin,
            "anchors": list(cfg.anchor_indices),
            "version": PIPELINE_VERSION,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def prepare_clips(raw_clips, cfg: PreprocessConfig, cache_dir=None, mmap: bool = True):
    """Prepare many clips, optionally caching tensors on disk.

    With a cache_dir, frames/deviations are stored as tensor files keyed by
    clip id + pipeline settings, and frames are memory-mapped on reload.
    """
    out = []
    for raw in raw_clips:
        if cache_dir is None:
            out.append(prepare_clip(raw, cfg))
            continue
        os.makedirs(str(cache_dir), exist_ok=True)
        key = _cache_key(raw.clip_id, cfg)
        frames_path = os.path.join(str(cache_dir), f"{raw.clip_id}.{key}.frames.tnsr")
        dev_path = os.path.join(str(cache_dir), f"{raw.clip_id}.{key}.dev.tnsr")
        if not (os.path.isfile(frames_path) and os.path.isfile(dev_path)):
            prepared = prepare_clip(raw, cfg)
            save_tensor(frames_path, prepared.frames)
            save_tensor(dev_path, prepared.deviations)
        frames = load_tensor(frames_path, mmap=mmap)
        dev = load_tensor(dev_path)
        out.append(
            PreparedClip(clip_id=raw.clip_id, label=raw.label, frames=frames, deviations=dev)
        )
    return out


def crop_window(rng: np.random.Generator, size: int, scale_range=(0.8, 1.0)):
    """Draw one square crop window (x0, y0, w, h) for a size x size frame."""
    lo, hi = scale_range
    if not 0.0 < lo <= hi <= 1.0:
        raise ConfigError(f"scale_range must satisfy 0 < lo <= hi <= 1, got {scale_range}")
    scale = rng.uniform(lo, hi)
    w = max(1, int(round(scale * size)))
    w = min(w, size)
    x0 = int(rng.integers(0, size - w + 1))
    y0 = int(rng.integers(0, size - w + 1))
    return x0, y0, w, w


def augment_spatial(seq: FrameSequence, rng: np.random.Generator, scale_range=(0.8, 1.0), flip_prob: float = 0.5) -> FrameSequence:
    """One crop window + one flip decision, applied identically to all frames.

    Using a single window for the whole sequence preserves cross-frame
    alignment, so the difference stack never encodes augmentation motion.
    """
    size = seq.frames.shape[1]
    x0, y0, w, h = crop_window(rng, size, scale_range)
    frames = seq.frames[:, y0 : y0 + h, x0 : x0 + w, :]
    if w != size:
        frames = np.stack([resize_bilinear(f, size, size) for f in frames])
    if flip_prob > 0 and rng.random() < flip_prob:
        frames = frames[:, :, ::-1, :].copy()
    return FrameSequence(
        frames=np.ascontiguousarray(frames, dtype=np.float32),
        source_indices=list(seq.source_indices),
        label=seq.label,
        clip_id=seq.clip_id,
    )


def select_keyframes_jittered(deviations: np.ndarray, k: int, rng: np.random.Generator, jitter: int = 1) -> list:
    """Greedy keyframe selection over a boundary-jittered stack partition.

    Interior stack boundaries move by up to +/-jitter frames (clamped so every
    stack stays non-empty); jitter 0 reproduces the deterministic selection.
    """
    n = deviations.shape[0]
    bounds = stack_boundaries(n, k)
    if jitter > 0 and k > 1:
        cuts = [b[0] for b in bounds] + [n]
        for i in range(1, k):
            delta = int(rng.integers(-jitter, jitter + 1))
            lo = cuts[i - 1] + 1
            hi = min(cuts[i + 1] - 1, n - (k - i))
            cuts[i] = int(np.clip(cuts[i] + delta, lo, hi))
        bounds = [(cuts[i], cuts[i + 1]) for i in range(k)]
    return select_keyframes_from_deviations(deviations, k, boundaries=bounds)


def augment_temporal(frames: np.ndarray, rng: np.random.Generator, k: int, jitter: int = 1) -> list:
    """Jittered keyframe indices straight from pixel data (see the _jittered variant)."""
    f = np.asarray(frames)
    if f.shape[0] < k + 1:
        raise TooFewFrames(f"need at least {k + 1} frames for k={k}, got {f.shape[0]}")
    return select_keyframes_jittered(deviation_matrix(f), k, rng, jitter)


def _binary_label(label: str) -> int:
    return 0 if label == "live" else 1


def _check_trainable(clips):
    if not clips:
        raise EmptyDataset("training needs at least one clip")
    classes = {_binary_label(c.label) for c in clips}
    if len(classes) < 2:
        raise SingleClassDataset("training set must contain live and attack clips")


def _sequence_for(clip: PreparedClip, indices, rng=None, hp: HyperParams = None) -> FrameSequence:
    seq = FrameSequence(
        frames=np.asarray(clip.frames[indices], dtype=np.float32),
        source_indices=list(indices),
        label=clip.label,
        clip_id=clip.clip_id,
    )
    if rng is not None and hp is not None and hp.spatial_augment:
        seq = augment_spatial(seq, rng)
    return seq


def _diff_from_sequence(seq: FrameSequence) -> np.ndarray:
    parts = [seq.frames[i + 1] - seq.frames[i] for i in range(seq.frames.shape[0] - 1)]
    return np.clip(np.concatenate(parts, axis=2), -1.0, 1.0).astype(np.float32)


def _batch_inputs(branch: str, clips, k: int, epoch: int, hp: HyperParams, branch_code: int, positions):
    """Assemble one batch's input tensor + labels with per-clip seeded rngs."""
    xs = []
    ys = []
    for pos, clip in zip(positions, clips):
        rng = np.random.default_rng(
            np.random.SeedSequence((hp.seed, branch_code, epoch, int(pos)))
        )
        if hp.temporal_augment:
            indices = select_keyframes_jittered(clip.deviations, k, rng)
        else:
            indices = select_keyframes_from_deviations(clip.deviations, k)
        seq = _sequence_for(clip, indices, rng=rng, hp=hp)
        if branch == "multi":
            xs.append(seq.frames)
        else:
            xs.append(_diff_from_sequence(seq))
        ys.append(_binary_label(clip.label))
    x = torch.from_numpy(np.stack(xs))
    y = torch.tensor(ys, dtype=torch.long)
    return x, y


def score_clips(model, branch: str, clips, k: int, batch_size: int = 8) -> list:
    """Deterministic (no-augment) branch scores for prepared clips."""
    model.eval()
    pairs = []
    with torch.no_grad():
        for start in range(0, len(clips), batch_size):
            chunk = clips[start : start + batch_size]
            xs = []
            for clip in chunk:
                indices = select_keyframes_from_deviations(clip.deviations, k)
                seq = _sequence_for(clip, indices)
                xs.append(seq.frames if branch == "multi" else _diff_from_sequence(seq))
            x = torch.from_numpy(np.stack(xs))
            pairs.extend(model.score(x))
    return pairs


def branch_metrics(model, branch: str, clips, k: int, threshold: float = 0.5) -> MetricsReport:
    """Single-branch metrics: live probability thresholded at 0.5 by default."""
    pairs = score_clips(model, branch, clips, k)
    scored = [
        (FusedScore(live_sum=p.live, spoof_sum=p.spoof), c.label)
        for p, c in zip(pairs, clips)
    ]
    return compute_metrics(scored, threshold=threshold)


def train_branch(
    branch: str,
    model,
    train_clips,
    hp: HyperParams,
    k: int,
    eval_clips=None,
    history_path=None,
    log=None,
) -> TrainHistory:
    """Train one branch; the model ends up holding its best-eval-ACER weights.

    eval_clips defaults to the training set.  When history_path is given,
    each epoch appends one JSON line there as it completes.
    """
    if branch not in BRANCHES:
        raise ConfigError(f"branch must be one of {BRANCHES}, got {branch!r}")
    train_clips = list(train_clips)
    _check_trainable(train_clips)
    eval_set = list(eval_clips) if eval_clips else train_clips
    branch_code = BRANCHES.index(branch)
    batch_size = hp.batch_multi if branch == "multi" else hp.batch_diff

    torch.manual_seed((hp.seed * 1000003 + branch_code * 101) % (2**31))
    optimiser = torch.optim.SGD(model.parameters(), lr=hp.lr, momentum=hp.momentum)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimiser, step_size=hp.lr_step, gamma=hp.lr_decay
    )

    history = TrainHistory(branch=branch)
    best_state = None
    started = time.monotonic()
    for epoch in range(hp.epochs):
        t0 = time.monotonic()
        order_rng = np.random.default_rng(
            np.random.SeedSequence((hp.seed, branch_code, epoch))
        )
        order = order_rng.permutation(len(train_clips))

        model.train()
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), batch_size):
            positions = order[start : start + batch_size]
            chunk = [train_clips[i] for i in positions]
            x, y = _batch_inputs(branch, chunk, k, epoch, hp, branch_code, positions)
            logits = model(x)
            loss = F.cross_entropy(logits, y)
            optimiser.zero_grad()
            loss.backward()
            optimiser.step()
            loss_sum += float(loss.detach()) * len(chunk)
            correct += int((logits.detach().argmax(dim=1) == y).sum())
        scheduler.step()

        train_loss = loss_sum / len(train_clips)
        train_acc = correct / len(train_clips)
        report = branch_metrics(model, branch, eval_set, k)
        row = {
            "epoch": epoch,
            "loss": train_loss,
            "train_accuracy": train_acc,
            "eval": report.to_dict(),
            "lr": optimiser.param_groups[0]["lr"],
            "seconds": time.monotonic() - t0,
        }
        history.epochs.append(row)
        if report.acer < history.best_acer - 1e-12:
            history.best_acer = report.acer
            history.best_epoch = epoch
            best_state = {
                name: value.detach().clone() for name, value in model.state_dict().items()
            }
        if history_path is not None:
            with open(str(history_path), "a") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        if log is not None:
            log(branch, row)
        if hp.early_stop_train_acc is not None and train_acc >= hp.early_stop_train_acc:
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    history.seconds_total = time.monotonic() - started
    return history


def evaluate_models(
    clips,
    multi_model=None,
    diff_model=None,
    k: int = 4,
    threshold: float = None,
    batch_size: int = 8,
):
    """Score prepared clips with one or both branches and compute metrics.

    With both models scores are summed (default threshold 1.0); with one
    model its softmax pair is used alone (default threshold 0.5).

    Returns:
        (MetricsReport, rows): rows are per-clip dicts ready for CSV/JSON.
    """
    clips = list(clips)
    if not clips:
        raise EmptyDataset("evaluation needs at least one clip")
    if multi_model is None and diff_model is None:
        raise ConfigError("evaluate_models needs at least one branch model")

    multi_pairs = (
        score_clips(multi_model, "multi", clips, k, batch_size) if multi_model else None
    )
    diff_pairs = (
        score_clips(diff_model, "diff", clips, k, batch_size) if diff_model else None
    )
    if threshold is None:
        threshold = 1.0 if (multi_pairs and diff_pairs) else 0.5

    scored = []
    rows = []
    for i, clip in enumerate(clips):
        pairs = []
        row = {"clip_id": clip.clip_id, "label": clip.label}
        if multi_pairs:
            pairs.append(multi_pairs[i])
            row["multi_live"] = multi_pairs[i].live
            row["multi_spoof"] = multi_pairs[i].spoof
        if diff_pairs:
            pairs.append(diff_pairs[i])
            row["diff_live"] = diff_pairs[i].live
            row["diff_spoof"] = diff_pairs[i].spoof
        fused = fuse_scores(*pairs)
        row["live_sum"] = fused.live_sum
        row["spoof_sum"] = fused.spoof_sum
        scored.append((fused, clip.label))
        rows.append(row)
    report = compute_metrics(scored, threshold=threshold)
    for row in rows:
        row["decision"] = "live" if row["live_sum"] > threshold else "spoof"
    return report, rows


def preprocess_raw_clip(raw, cfg: PreprocessConfig):
    """One-shot pipeline for prediction on a raw clip (no caching)."""
    return preprocess_clip(raw, cfg)
