"""Seeded procedural clips for the three presentation classes.

Every clip renders the same face-like pattern (skin ellipse, eye/mouth/nose
blobs, a fixed fine texture) through a per-frame placement transform, so the
classes differ only in motion statistics and surface texture:

* live    - static pose; eyes and mouth open/close smoothly (local motion);
* print   - the whole pattern random-walks rigidly (hand tremble) under a
            high-frequency halftone grid; no local motion;
* replay  - slow projective wobble of the pattern, horizontal banding that
            crawls frame to frame, and mild local motion.

Keypoints come straight from the generator parameters (analytic, no
detector): nine canonical points mapped through each frame's placement.
Per-pixel Gaussian sensor noise is added to every frame before quantisation.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import LABELS, RawClip, dataset_tree_hash, write_clip, write_json
from .errors import ConfigError, IOFailure

TEXTURE_GRID = 24  # coarse noise grid upsampled into the skin texture


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs; the seed pins every random draw."""

    clips_per_class: int = 10
    frames_per_clip: int = 24
    frame_size: int = 256
    seed: int = 0
    noise_std: float = 0.008
    live_blink_amp: float = 0.95
    live_mouth_amp: float = 0.85
    print_jitter_std: float = 1.6
    print_max_shift: float = 7.0
    print_grid_amp: float = 0.05
    replay_wobble_px: float = 3.0
    replay_band_amp: float = 0.012
    replay_blink_amp: float = 0.12
    texture_amp: float = 0.05

    def __post_init__(self):
        if self.clips_per_class < 1:
            raise ConfigError(f"clips_per_class must be >= 1, got {self.clips_per_class}")
        if self.frames_per_clip < 11:
            raise ConfigError(f"frames_per_clip must be >= 11, got {self.frames_per_clip}")
        if self.frame_size < 64:
            raise ConfigError(f"frame_size must be >= 64, got {self.frame_size}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")


def _bilinear_sample(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a 2-d grid at float coordinates with edge clamping."""
    h, w = grid.shape
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = x - x0
    wy = y - y0
    top = grid[y0, x0] * (1 - wx) + grid[y0, x1] * wx
    bot = grid[y1, x0] * (1 - wx) + grid[y1, x1] * wx
    return top * (1 - wy) + bot * wy


def _soft_inside(e: np.ndarray, softness: float) -> np.ndarray:
    """Smooth indicator of e < 1 (e is a squared ellipse coordinate)."""
    z = np.clip((e - 1.0) / softness, -60.0, 60.0)
    return 1.0 / (1.0 + np.exp(z))


class _FaceSampler:
    """Evaluates the canonical pattern (face + background) at float coords."""

    def __init__(self, rng: np.random.Generator, cfg: SynthConfig):
        f = cfg.frame_size
        self.frame_size = f
        self.rx = f * rng.uniform(0.29, 0.33)
        self.ry = f * rng.uniform(0.37, 0.41)
        self.eye_dx = self.rx * rng.uniform(0.42, 0.50)
        self.eye_y = -self.ry * rng.uniform(0.26, 0.33)
        self.eye_rx = self.rx * rng.uniform(0.21, 0.25)
        self.eye_ry = self.ry * rng.uniform(0.13, 0.16)
        self.nose_y = self.ry * rng.uniform(0.05, 0.12)
        self.nose_r = self.rx * rng.uniform(0.10, 0.14)
        self.mouth_y = self.ry * rng.uniform(0.42, 0.50)
        self.mouth_rx = self.rx * rng.uniform(0.36, 0.44)
        self.mouth_ry = self.ry * rng.uniform(0.11, 0.14)
        self.jaw_x = self.rx * rng.uniform(0.74, 0.82)
        self.jaw_y = self.ry * rng.uniform(0.78, 0.86)

        tone = rng.uniform(0.92, 1.06)
        self.skin = np.array([0.76, 0.60, 0.50]) * tone
        self.eye_color = np.array([0.12, 0.10, 0.10])
        self.mouth_color = np.array([0.42, 0.15, 0.15])
        self.bg_base = np.array([0.32, 0.36, 0.42]) + rng.uniform(-0.04, 0.04, size=3)
        self.bg_grad = rng.uniform(0.10, 0.18)

        noise = rng.normal(size=(TEXTURE_GRID, TEXTURE_GRID))
        self.texture = noise / max(1e-9, np.abs(noise).max())
        self.texture_amp = cfg.texture_amp

    def keypoints(self) -> np.ndarray:
        """Nine canonical (x, y) points; order matches dataset.KEYPOINT_NAMES."""
        return np.array(
            [
                (-self.eye_dx - self.eye_rx, self.eye_y),
                (-self.eye_dx + self.eye_rx, self.eye_y),
                (self.eye_dx - self.eye_rx, self.eye_y),
                (self.eye_dx + self.eye_rx, self.eye_y),
                (0.0, self.nose_y),
                (-self.mouth_rx, self.mouth_y),
                (self.mouth_rx, self.mouth_y),
                (-self.jaw_x, self.jaw_y),
                (self.jaw_x, self.jaw_y),
            ],
            dtype=np.float64,
        )

    def shade(self, cx: np.ndarray, cy: np.ndarray, eye_open: float, mouth_open: float):
        """RGB values at canonical coordinates (arrays of equal shape)."""
        f = self.frame_size
        img = np.empty(cx.shape + (3,), dtype=np.float64)
        grad = self.bg_grad * (cy / f)
        for c in range(3):
            img[..., c] = self.bg_base[c] + grad

        e_face = (cx / self.rx) ** 2 + (cy / self.ry) ** 2
        w_face = _soft_inside(e_face, 0.05)

        tex_span = 2.2 * max(self.rx, self.ry)
        tx = (cx + tex_span) / (2 * tex_span) * (TEXTURE_GRID - 1)
        ty = (cy + tex_span) / (2 * tex_span) * (TEXTURE_GRID - 1)
        tex = _bilinear_sample(self.texture, tx, ty) * self.texture_amp
        skin_shades = (1.0, 0.9, 0.8)  # texture is slightly colour-dependent

        for c in range(3):
            face_val = self.skin[c] + tex * skin_shades[c]
            img[..., c] = img[..., c] * (1 - w_face) + face_val * w_face

        open_ry = max(1e-3, eye_open) * self.eye_ry
        for sign in (-1.0, 1.0):
            e_eye = ((cx - sign * self.eye_dx) / self.eye_rx) ** 2 + (
                (cy - self.eye_y) / open_ry
            ) ** 2
            w_eye = _soft_inside(e_eye, 0.08) * w_face
            for c in range(3):
                img[..., c] = img[..., c] * (1 - w_eye) + self.eye_color[c] * w_eye

        e_nose = ((cx / self.nose_r) ** 2 + ((cy - self.nose_y) / self.nose_r) ** 2)
        w_nose = _soft_inside(e_nose, 0.10) * w_face
        for c in range(3):
            img[..., c] = img[..., c] * (1 - w_nose) + self.skin[c] * 0.88 * w_nose

        mouth_ry = (0.35 + 0.65 * mouth_open) * self.mouth_ry
        e_mouth = ((cx / self.mouth_rx) ** 2 + ((cy - self.mouth_y) / mouth_ry) ** 2)
        w_mouth = _soft_inside(e_mouth, 0.08) * w_face
        for c in range(3):
            img[..., c] = img[..., c] * (1 - w_mouth) + self.mouth_color[c] * w_mouth

        return img


def _placement_series(kind: str, rng: np.random.Generator, cfg: SynthConfig) -> list:
    """Per-frame 3x3 matrices mapping canonical -> centred frame coordinates."""
    n = cfg.frames_per_clip
    mats = []
    if kind == "live":
        for _ in range(n):
            mats.append(np.eye(3))
    elif kind == "print":
        shift = np.zeros(2)
        theta = 0.0
        for t in range(n):
            if t > 0:
                shift = np.clip(
                    shift + rng.normal(0.0, cfg.print_jitter_std, size=2),
                    -cfg.print_max_shift,
                    cfg.print_max_shift,
                )
                theta = float(
                    np.clip(theta + rng.normal(0.0, 0.004), -0.02, 0.02)
                )
            c, s = math.cos(theta), math.sin(theta)
            mats.append(
                np.array([[c, -s, shift[0]], [s, c, shift[1]], [0.0, 0.0, 1.0]])
            )
    elif kind == "replay":
        f = cfg.frame_size
        amp_a = rng.uniform(0.006, 0.014, size=4)
        amp_t = rng.uniform(0.5, 1.0, size=2) * cfg.replay_wobble_px
        amp_p = rng.uniform(0.2, 0.5, size=2) * (0.05 / f)
        freqs = rng.uniform(0.6, 1.4, size=8) * (2.0 * math.pi / n)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=8)
        for t in range(n):
            osc = np.sin(freqs * t + phases)
            a, b, c, d = amp_a * osc[:4]
            tx, ty = amp_t * osc[4:6]
            e, g = amp_p * osc[6:8]
            mats.append(
                np.array(
                    [[1.0 + a, b, tx], [c, 1.0 + d, ty], [e, g, 1.0]]
                )
            )
    else:
        raise ConfigError(f"unknown clip kind {kind!r}; expected one of {LABELS}")
    return mats


def _local_series(kind: str, rng: np.random.Generator, cfg: SynthConfig):
    """Per-frame (eye_open, mouth_open) trajectories."""
    n = cfg.frames_per_clip
    t = np.arange(n, dtype=np.float64)
    if kind == "live":
        blink_f = rng.uniform(1.3, 2.1) * 2.0 * math.pi / n
        mouth_f = rng.uniform(1.0, 1.7) * 2.0 * math.pi / n
        blink_ph = rng.uniform(0.0, 2.0 * math.pi)
        mouth_ph = rng.uniform(0.0, 2.0 * math.pi)
        eye_open = 1.0 - cfg.live_blink_amp * 0.5 * (1.0 + np.sin(blink_f * t + blink_ph))
        mouth_open = cfg.live_mouth_amp * 0.5 * (1.0 + np.sin(mouth_f * t + mouth_ph))
    elif kind == "print":
        eye_open = np.full(n, rng.uniform(0.85, 1.0))
        mouth_open = np.full(n, rng.uniform(0.2, 0.5))
    else:  # replay: the recorded face still moves, just less
        blink_f = rng.uniform(0.5, 0.9) * 2.0 * math.pi / n
        blink_ph = rng.uniform(0.0, 2.0 * math.pi)
        eye_open = 1.0 - cfg.replay_blink_amp * 0.5 * (1.0 + np.sin(blink_f * t + blink_ph))
        mouth_open = np.full(n, rng.uniform(0.2, 0.5)) + 0.1 * np.sin(
            blink_f * 0.7 * t + blink_ph
        )
    return eye_open, mouth_open


def generate_clip(kind: str, seed: int, cfg: SynthConfig, clip_id: str = None) -> RawClip:
    """Render one clip of the given kind; (kind, seed, cfg) fixes every byte."""
    if kind not in LABELS:
        raise ConfigError(f"unknown clip kind {kind!r}; expected one of {LABELS}")
    rng = np.random.default_rng(seed)
    face = _FaceSampler(rng, cfg)
    placements = _placement_series(kind, rng, cfg)
    eye_open, mouth_open = _local_series(kind, rng, cfg)

    f = cfg.frame_size
    half = f / 2.0
    xs = np.arange(f, dtype=np.float64) - half
    ys = np.arange(f, dtype=np.float64) - half
    gx, gy = np.meshgrid(xs, ys)

    # Periods stay well above Nyquist even after the face crop is resized
    # down, so the overlays survive as texture rather than aliasing noise.
    grid_period = rng.uniform(5.5, 7.0)
    band_period = rng.uniform(10.0, 14.0)
    band_speed = rng.uniform(0.35, 0.7)
    band_phase = rng.uniform(0.0, 2.0 * math.pi)

    frames = np.empty((cfg.frames_per_clip, f, f, 3), dtype=np.uint8)
    kps = np.empty((cfg.frames_per_clip, 9, 2), dtype=np.float64)
    canon_kp = face.keypoints()
    kp_hom = np.concatenate([canon_kp, np.ones((9, 1))], axis=1)

    for t, m in enumerate(placements):
        inv = np.linalg.inv(m)
        denom = inv[2, 0] * gx + inv[2, 1] * gy + inv[2, 2]
        cx = (inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]) / denom
        cy = (inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]) / denom

        img = face.shade(cx, cy, float(eye_open[t]), float(mouth_open[t]))

        if kind == "print":
            halftone = np.sin(2.0 * math.pi * cx / grid_period) * np.sin(
                2.0 * math.pi * cy / grid_period
            )
            img += (cfg.print_grid_amp * halftone)[..., None]
        elif kind == "replay":
            band = np.sin(2.0 * math.pi * gy / band_period + band_speed * t + band_phase)
            img += (cfg.replay_band_amp * band)[..., None]

        if cfg.noise_std > 0:
            img += rng.normal(0.0, cfg.noise_std, size=img.shape)

        frames[t] = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)

        mapped = kp_hom @ m.T
        kps[t] = mapped[:, :2] / mapped[:, 2:3] + half

    cid = clip_id if clip_id is not None else f"{kind}_{seed & 0xFFFFFFFF:08x}"
    return RawClip(clip_id=cid, frames=frames, keypoints=kps, label=kind)


def clip_seed(dataset_seed: int, clip_id: str) -> int:
    """Stable per-clip seed derived from the dataset seed and clip id."""
    digest = hashlib.sha256(f"{dataset_seed}:{clip_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def generate_dataset(cfg: SynthConfig, out_root) -> list:
    """Write a balanced dataset of clips_per_class clips per label under out_root.

    Produces the standard clip layout plus a manifest.json echoing the config
    and recording the content hash of the tree.  Returns the clip ids.
    """
    out_root = str(out_root)
    try:
        os.makedirs(out_root, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create dataset root {out_root}: {exc}") from exc
    clip_ids = []
    for label in LABELS:
        for i in range(cfg.clips_per_class):
            cid = f"{label}_{i:03d}"
            clip = generate_clip(label, clip_seed(cfg.seed, cid), cfg, clip_id=cid)
            write_clip(out_root, clip)
            clip_ids.append(cid)
    manifest = {
        "command": "generate",
        "config": asdict(cfg),
        "seed": cfg.seed,
        "clips": clip_ids,
        "tree_hash": dataset_tree_hash(out_root, exclude=("manifest.json",)),
    }
    write_json(os.path.join(out_root, "manifest.json"), manifest)
    return clip_ids
