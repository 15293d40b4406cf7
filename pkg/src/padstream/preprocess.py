"""Clip preprocessing: register, crop, pick keyframes, build difference stacks.

The pipeline turns a raw clip (N frames + per-frame keypoints) into the two
network inputs:

1. every frame after the first is projectively registered onto frame 0 using
   a fixed subset of the keypoints as anchors;
2. all frames are cropped to the frame-0 keypoint bounding box plus margin;
3. k keyframes are greedily selected among frames 1..N-1 by maximising
   mean-absolute-difference from the running onset frame, one per contiguous
   stack, frame 0 always kept -> a (k+1)-frame sequence;
4. the sequence is resized square and consecutive-frame RGB differences are
   concatenated channel-wise into a single 3k-channel stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    EmptyBox,
    InconsistentShapes,
    ShapeMismatch,
    TooFewFrames,
)
from .registration import fit_registration, warp_frame


@dataclass(frozen=True)
class PreprocessConfig:
    """Knobs for the registration/crop/selection pipeline.

    anchor_indices picks which keypoints drive registration; the default set
    (outer eye corners, nose tip, jaw corners) stays put under expression
    changes, unlike mouth/eyelid points.
    """

    k: int = 4
    out_size: int = 224
    crop_margin: float = 0.25
    anchor_indices: tuple = (0, 3, 4, 7, 8)

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.out_size < 32:
            raise ConfigError(f"out_size must be >= 32, got {self.out_size}")
        if not 0.0 <= self.crop_margin <= 1.0:
            raise ConfigError(f"crop_margin must be in [0, 1], got {self.crop_margin}")
        if len(self.anchor_indices) < 4:
            raise ConfigError("anchor_indices needs at least 4 entries")
        if len(set(self.anchor_indices)) != len(self.anchor_indices):
            raise ConfigError("anchor_indices contains duplicates")


@dataclass(frozen=True)
class CropBox:
    """Integer pixel box, half-open: columns [x0, x1), rows [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise EmptyBox(f"crop box has no area: {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass
class FrameSequence:
    """k+1 selected, registered, cropped, square-resized frames of one clip."""

    frames: np.ndarray  # [T, S, S, 3] float32 in [0, 1]
    source_indices: list
    label: str
    clip_id: str

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float32)
        if f.ndim != 4 or f.shape[3] != 3 or f.shape[1] != f.shape[2]:
            raise ShapeMismatch(f"expected [T,S,S,3] frames, got {f.shape}")
        if f.shape[0] != len(self.source_indices):
            raise InconsistentShapes(
                f"{f.shape[0]} frames but {len(self.source_indices)} source indices"
            )
        if list(self.source_indices) != sorted(set(int(i) for i in self.source_indices)):
            raise InconsistentShapes("source indices must be strictly increasing")
        self.frames = f
        self.source_indices = [int(i) for i in self.source_indices]


@dataclass
class DiffStack:
    """Channel-concatenated consecutive RGB differences of a FrameSequence."""

    diffs: np.ndarray  # [S, S, 3k] float32 in [-1, 1]
    label: str
    clip_id: str

    def __post_init__(self):
        d = np.asarray(self.diffs, dtype=np.float32)
        if d.ndim != 3 or d.shape[2] % 3 != 0 or d.shape[0] != d.shape[1]:
            raise ShapeMismatch(f"expected [S,S,3k] diff stack, got {d.shape}")
        self.diffs = d

    @property
    def k(self) -> int:
        return self.diffs.shape[2] // 3


def compute_crop_box(keypoints, margin: float, frame_shape) -> CropBox:
    """Bounding box of the keypoints, padded by margin * extent per axis.

    The padded box is floored/ceiled outward to integers and clamped to the
    frame.  Raises EmptyBox when the keypoints have zero extent along an axis
    or the clamped box has no area.
    """
    pts = np.asarray(keypoints, dtype=np.float64).reshape(-1, 2)
    h, w = int(frame_shape[0]), int(frame_shape[1])
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    ext_x = xmax - xmin
    ext_y = ymax - ymin
    if ext_x <= 0 or ext_y <= 0:
        raise EmptyBox("keypoints have zero extent")
    x0 = max(0, int(math.floor(xmin - margin * ext_x)))
    y0 = max(0, int(math.floor(ymin - margin * ext_y)))
    x1 = min(w, int(math.ceil(xmax + margin * ext_x)))
    y1 = min(h, int(math.ceil(ymax + margin * ext_y)))
    if x1 <= x0 or y1 <= y0:
        raise EmptyBox("crop box falls outside the frame")
    return CropBox(x0, y0, x1, y1)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping.

    Same-size input is returned value-identical; output dtype is float32.
    """
    f = np.asarray(img, dtype=np.float64)
    squeeze = f.ndim == 2
    if squeeze:
        f = f[:, :, None]
    in_h, in_w = f.shape[:2]
    u = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    v = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    u = np.clip(u, 0.0, in_w - 1.0)
    v = np.clip(v, 0.0, in_h - 1.0)
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    wx = (u - x0)[None, :, None]
    wy = (v - y0)[:, None, None]
    top = f[y0][:, x0] * (1.0 - wx) + f[y0][:, x1] * wx
    bot = f[y1][:, x0] * (1.0 - wx) + f[y1][:, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    if squeeze:
        out = out[:, :, 0]
    return out.astype(np.float32)


def difference_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute per-pixel difference between two equal-shape frames."""
    fa = np.asarray(a, dtype=np.float64)
    fb = np.asarray(b, dtype=np.float64)
    if fa.shape != fb.shape:
        raise ShapeMismatch(f"frame shapes differ: {fa.shape} vs {fb.shape}")
    return float(np.mean(np.abs(fa - fb)))


def deviation_matrix(frames: np.ndarray) -> np.ndarray:
    """Symmetric [N, N] matrix of pairwise difference deviations."""
    f = np.asarray(frames, dtype=np.float64)
    n = f.shape[0]
    flat = f.reshape(n, -1)
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.mean(np.abs(flat[i] - flat[j])))
            out[i, j] = d
            out[j, i] = d
    return out


def stack_boundaries(n_frames: int, k: int) -> list:
    """Partition candidate frames 1..n-1 into k contiguous stacks.

    Returns k (start, end) half-open index ranges.  The remainder of
    (n_frames - 1) / k goes to the earliest stacks, one extra frame each.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if n_frames < k + 1:
        raise TooFewFrames(f"need at least {k + 1} frames for k={k}, got {n_frames}")
    n_cand = n_frames - 1
    base, rem = divmod(n_cand, k)
    bounds = []
    start = 1
    for i in range(k):
        size = base + (1 if i < rem else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def select_keyframes_from_deviations(dev: np.ndarray, k: int, boundaries=None) -> list:
    """Greedy onset-chasing selection given a precomputed deviation matrix.

    Frame 0 is always kept.  Walking the stacks left to right, each stack
    contributes the frame with the largest deviation from the current onset
    (ties break to the smallest index); the winner becomes the new onset.
    """
    d = np.asarray(dev, dtype=np.float64)
    n = d.shape[0]
    if boundaries is None:
        boundaries = stack_boundaries(n, k)
    selected = [0]
    onset = 0
    for start, end in boundaries:
        window = d[onset, start:end]
        pick = start + int(np.argmax(window))
        selected.append(pick)
        onset = pick
    return selected


def select_keyframes(frames: np.ndarray, k: int) -> list:
    """Greedy keyframe selection straight from pixel data.

    Equivalent to select_keyframes_from_deviations on the pairwise deviation
    matrix, but only computes the deviations it actually inspects.
    """
    f = np.asarray(frames, dtype=np.float64)
    n = f.shape[0]
    boundaries = stack_boundaries(n, k)
    flat = f.reshape(n, -1)
    selected = [0]
    onset = 0
    for start, end in boundaries:
        best_idx = start
        best_dev = -1.0
        for j in range(start, end):
            dev = float(np.mean(np.abs(flat[onset] - flat[j])))
            if dev > best_dev:
                best_dev = dev
                best_idx = j
        selected.append(best_idx)
        onset = best_idx
    return selected


def compute_diff_stack(seq: FrameSequence) -> DiffStack:
    """Consecutive-frame differences, concatenated along channels.

    A (k+1)-frame sequence yields a [S, S, 3k] stack; values are clipped to
    [-1, 1] (a no-op for unit-interval frames).
    """
    t = seq.frames.shape[0]
    if t < 2:
        raise TooFewFrames("need at least 2 frames to form differences")
    parts = [seq.frames[i + 1] - seq.frames[i] for i in range(t - 1)]
    diffs = np.clip(np.concatenate(parts, axis=2), -1.0, 1.0).astype(np.float32)
    return DiffStack(diffs=diffs, label=seq.label, clip_id=seq.clip_id)


def register_and_crop(frames: np.ndarray, keypoints: np.ndarray, cfg: PreprocessConfig):
    """Shared front half of the pipeline: align every frame to frame 0, crop.

    Args:
        frames: [N, H, W, 3] uint8 or float array.
        keypoints: [N, P, 2] float (x, y) per frame.
        cfg: pipeline configuration.

    Returns:
        (cropped, box): cropped [N, bh, bw, 3] float32 in [0, 1] and the
        frame-0 CropBox used.
    """
    f = np.asarray(frames)
    kp = np.asarray(keypoints, dtype=np.float64)
    n = f.shape[0]
    if n < 2:
        raise TooFewFrames(f"clip has {n} frames; need at least 2")
    if kp.shape[0] != n:
        raise InconsistentShapes(
            f"clip has {n} frames but {kp.shape[0]} keypoint rows"
        )
    max_anchor = max(cfg.anchor_indices)
    if kp.shape[1] <= max_anchor:
        raise ConfigError(
            f"anchor index {max_anchor} out of range for {kp.shape[1]} keypoints"
        )

    if f.dtype == np.uint8:
        pix = f.astype(np.float32) / 255.0
    else:
        pix = f.astype(np.float32)

    anchors0 = kp[0, list(cfg.anchor_indices)]
    h, w = pix.shape[1:3]
    registered = np.empty_like(pix)
    registered[0] = pix[0]
    for t in range(1, n):
        anchors_t = kp[t, list(cfg.anchor_indices)]
        transform = fit_registration(anchors0, anchors_t)
        registered[t] = warp_frame(pix[t], transform, (h, w))

    box = compute_crop_box(kp[0], cfg.crop_margin, (h, w))
    cropped = registered[:, box.y0 : box.y1, box.x0 : box.x1, :]
    return np.ascontiguousarray(cropped), box


def preprocess_clip(clip, cfg: PreprocessConfig):
    """Full pipeline for one clip: returns (FrameSequence, DiffStack).

    ``clip`` is any object with .frames [N,H,W,3], .keypoints [N,P,2],
    .label and .clip_id attributes (see dataset.RawClip).
    """
    cropped, _ = register_and_crop(clip.frames, clip.keypoints, cfg)
    indices = select_keyframes(cropped, cfg.k)
    resized = np.stack(
        [resize_bilinear(cropped[i], cfg.out_size, cfg.out_size) for i in indices]
    )
    seq = FrameSequence(
        frames=resized, source_indices=indices, label=clip.label, clip_id=clip.clip_id
    )
    return seq, compute_diff_stack(seq)
