"""On-disk clip layout and dataset utilities.

A dataset root holds one directory per clip:

    <root>/<clip_id>/
        frame_0000.png ... frame_NNNN.png   zero-padded RGB frames
        keypoints.txt                       one line per frame:
                                            "<frame_index> x0 y0 x1 y1 ..."
        label.txt                           one of: live | print | replay

Keypoint convention (9 points, (x, y) = (column, row)):

    0 left-eye outer   1 left-eye inner   2 right-eye inner  3 right-eye outer
    4 nose tip         5 mouth left       6 mouth right
    7 jaw left         8 jaw right
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigError, IOFailure, MissingArtifact

LABELS = ("live", "print", "replay")
ATTACK_LABELS = ("print", "replay")

KEYPOINT_NAMES = (
    "left_eye_outer",
    "left_eye_inner",
    "right_eye_inner",
    "right_eye_outer",
    "nose_tip",
    "mouth_left",
    "mouth_right",
    "jaw_left",
    "jaw_right",
)


@dataclass
class RawClip:
    """A decoded clip: frames, per-frame keypoints, ground-truth label."""

    clip_id: str
    frames: np.ndarray  # [N, H, W, 3] uint8
    keypoints: np.ndarray  # [N, P, 2] float64, (x, y)
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ConfigError(f"unknown label {self.label!r}; expected one of {LABELS}")
        f = np.asarray(self.frames)
        kp = np.asarray(self.keypoints, dtype=np.float64)
        if f.ndim != 4 or f.shape[3] != 3:
            raise IOFailure(f"clip {self.clip_id}: frames must be [N,H,W,3], got {f.shape}")
        if kp.ndim != 3 or kp.shape[2] != 2 or kp.shape[0] != f.shape[0]:
            raise IOFailure(
                f"clip {self.clip_id}: keypoints {kp.shape} do not match {f.shape[0]} frames"
            )
        self.frames = f
        self.keypoints = kp

    @property
    def is_live(self) -> bool:
        return self.label == "live"


def write_clip(root, clip: RawClip) -> str:
    """Write one clip directory under ``root``; returns the clip path."""
    clip_dir = os.path.join(str(root), clip.clip_id)
    try:
        os.makedirs(clip_dir, exist_ok=True)
        for i in range(clip.frames.shape[0]):
            Image.fromarray(clip.frames[i], mode="RGB").save(
                os.path.join(clip_dir, f"frame_{i:04d}.png")
            )
        lines = []
        for i, row in enumerate(clip.keypoints):
            coords = " ".join(f"{v:.6f}" for v in row.reshape(-1))
            lines.append(f"{i} {coords}")
        with open(os.path.join(clip_dir, "keypoints.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        with open(os.path.join(clip_dir, "label.txt"), "w") as fh:
            fh.write(clip.label + "\n")
    except OSError as exc:
        raise IOFailure(f"failed writing clip {clip.clip_id}: {exc}") from exc
    return clip_dir


def read_clip(clip_dir) -> RawClip:
    """Load a clip directory written by write_clip (or anything matching the layout)."""
    clip_dir = str(clip_dir)
    if not os.path.isdir(clip_dir):
        raise MissingArtifact(f"clip directory not found: {clip_dir}")
    clip_id = os.path.basename(os.path.normpath(clip_dir))
    try:
        frame_names = sorted(
            n for n in os.listdir(clip_dir) if n.startswith("frame_") and n.endswith(".png")
        )
        if not frame_names:
            raise IOFailure(f"clip {clip_id}: no frame PNGs found")
        frames = np.stack(
            [np.asarray(Image.open(os.path.join(clip_dir, n)).convert("RGB")) for n in frame_names]
        )
        with open(os.path.join(clip_dir, "keypoints.txt")) as fh:
            rows = {}
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                idx = int(parts[0])
                vals = np.array([float(v) for v in parts[1:]], dtype=np.float64)
                if vals.size % 2 != 0:
                    raise IOFailure(f"clip {clip_id}: odd coordinate count on frame {idx}")
                rows[idx] = vals.reshape(-1, 2)
        keypoints = np.stack([rows[i] for i in range(len(frame_names))])
        with open(os.path.join(clip_dir, "label.txt")) as fh:
            label = fh.read().strip()
    except FileNotFoundError as exc:
        raise MissingArtifact(f"clip {clip_id}: missing {exc.filename}") from exc
    except (OSError, ValueError, KeyError) as exc:
        raise IOFailure(f"failed reading clip {clip_id}: {exc}") from exc
    return RawClip(clip_id=clip_id, frames=frames, keypoints=keypoints, label=label)


def list_clip_dirs(root) -> list:
    """Sorted clip directories under a dataset root (those holding a label.txt)."""
    root = str(root)
    if not os.path.isdir(root):
        raise MissingArtifact(f"dataset root not found: {root}")
    out = []
    for name in sorted(os.listdir(root)):
        path = os.path.join(root, name)
        if os.path.isdir(path) and os.path.isfile(os.path.join(path, "label.txt")):
            out.append(path)
    return out


def read_label(clip_dir) -> str:
    try:
        with open(os.path.join(str(clip_dir), "label.txt")) as fh:
            return fh.read().strip()
    except OSError as exc:
        raise IOFailure(f"cannot read label in {clip_dir}: {exc}") from exc


def _id_rank(clip_id: str) -> str:
    return hashlib.sha256(clip_id.encode("utf-8")).hexdigest()


def split_clip_ids(ids_with_labels, train_fraction: float = 0.8):
    """Deterministic stratified split, independent of listing order.

    Within each label the ids are ranked by sha256(clip_id); the first
    max(1, round((1 - train_fraction) * n)) in rank order become test.

    Args:
        ids_with_labels: iterable of (clip_id, label).
        train_fraction: fraction kept for training, in (0, 1).

    Returns:
        (train_ids, test_ids), each sorted by clip id.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_label = {}
    for clip_id, label in ids_with_labels:
        by_label.setdefault(label, []).append(clip_id)
    train, test = [], []
    for label in sorted(by_label):
        ids = sorted(by_label[label], key=_id_rank)
        n_test = max(1, round((1.0 - train_fraction) * len(ids)))
        if n_test >= len(ids):
            raise ConfigError(
                f"label {label!r} has only {len(ids)} clips; cannot split at {train_fraction}"
            )
        test.extend(ids[:n_test])
        train.extend(ids[n_test:])
    return sorted(train), sorted(test)


def dataset_tree_hash(root, exclude=()) -> str:
    """sha256 over sorted (relative path, file sha256) pairs under ``root``.

    ``exclude`` lists relative paths to skip (e.g. the manifest that stores
    this very hash).
    """
    root = str(root)
    skip = {e.replace(os.sep, "/") for e in exclude}
    digest = hashlib.sha256()
    entries = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            rel = os.path.relpath(path, root).replace(os.sep, "/")
            if rel in skip:
                continue
            with open(path, "rb") as fh:
                file_hash = hashlib.sha256(fh.read()).hexdigest()
            entries.append((rel, file_hash))
    for rel, file_hash in sorted(entries):
        digest.update(rel.encode("utf-8"))
        digest.update(b"\0")
        digest.update(file_hash.encode("ascii"))
        digest.update(b"\n")
    return digest.hexdigest()


def write_json(path, payload: dict):
    """Write a JSON file with sorted keys (stable bytes for identical payloads)."""
    try:
        with open(str(path), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def read_json(path) -> dict:
    if not os.path.isfile(str(path)):
        raise MissingArtifact(f"file not found: {path}")
    try:
        with open(str(path)) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
