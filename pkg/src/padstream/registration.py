"""Projective frame registration.

A clip is aligned to its first frame by fitting a plane-to-plane projective
transform (3x3 matrix, bottom-right entry normalised to 1) between anchor
keypoints of frame 0 and each later frame, then resampling the later frame
through that transform with bilinear interpolation.

Conventions used throughout:

* points are (x, y) pairs, x = column, y = row;
* ``fit_registration(src, dst)`` returns the matrix mapping src -> dst;
* ``warp_frame(frame, t)`` samples ``frame`` at ``t @ (x, y, 1)`` for every
  output pixel (x, y), i.e. the matrix is the output->input map.  Registering
  frame t onto frame 0 therefore uses the matrix fitted from frame-0 anchors
  (src) to frame-t anchors (dst).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAnchors, LengthMismatch, ShapeMismatch, SingularTransform

_DET_EPS = 1e-12
_RANK_RTOL = 1e-9


@dataclass(frozen=True)
class RegistrationTransform:
    """A 3x3 projective transform with matrix[2, 2] == 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ShapeMismatch(f"expected a 3x3 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise SingularTransform("transform matrix contains non-finite entries")
        if abs(m[2, 2] - 1.0) > 1e-9:
            raise SingularTransform("transform matrix is not normalised (m[2,2] != 1)")
        if abs(np.linalg.det(m)) <= _DET_EPS:
            raise SingularTransform("transform matrix is singular")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "RegistrationTransform":
        return cls(np.eye(3))

    def inverse(self) -> "RegistrationTransform":
        inv = np.linalg.inv(self.matrix)
        if abs(inv[2, 2]) <= _DET_EPS:
            raise SingularTransform("inverse cannot be normalised")
        return RegistrationTransform(inv / inv[2, 2])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (n, 2) array of (x, y) points through the transform."""
        pts = np.asarray(points, dtype=np.float64)
        ones = np.ones((pts.shape[0], 1))
        hom = np.concatenate([pts, ones], axis=1) @ self.matrix.T
        denom = hom[:, 2:3]
        if np.any(np.abs(denom) <= _DET_EPS):
            raise SingularTransform("point maps to infinity under transform")
        return hom[:, :2] / denom


def _normalise_points(pts: np.ndarray):
    """Hartley normalisation: translate centroid to origin, scale mean radius to sqrt(2)."""
    centroid = pts.mean(axis=0)
    shifted = pts - centroid
    mean_dist = np.mean(np.sqrt(np.sum(shifted**2, axis=1)))
    if mean_dist <= _DET_EPS:
        raise DegenerateAnchors("anchor points are coincident")
    s = np.sqrt(2.0) / mean_dist
    t = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return shifted * s, t


def fit_registration(src_points, dst_points) -> RegistrationTransform:
    """Least-squares projective transform mapping src points onto dst points.

    Uses the direct linear transform on Hartley-normalised coordinates and
    takes the smallest-singular-vector solution, so four exact correspondences
    reproduce the generating matrix and n > 4 noisy ones give the algebraic
    least-squares fit.

    Raises LengthMismatch if the lists disagree in length, DegenerateAnchors
    if fewer than four pairs are given or the system is rank deficient
    (e.g. three collinear points doing all the work).
    """
    src = np.asarray(src_points, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst_points, dtype=np.float64).reshape(-1, 2)
    if src.shape[0] != dst.shape[0]:
        raise LengthMismatch(
            f"point lists differ in length: {src.shape[0]} vs {dst.shape[0]}"
        )
    n = src.shape[0]
    if n < 4:
        raise DegenerateAnchors(f"need at least 4 point pairs, got {n}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise DegenerateAnchors("anchor points contain non-finite values")

    src_n, t_src = _normalise_points(src)
    dst_n, t_dst = _normalise_points(dst)

    a = np.zeros((2 * n, 9), dtype=np.float64)
    for i in range(n):
        x, y = src_n[i]
        u, v = dst_n[i]
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]

    _, sing, vt = np.linalg.svd(a)
    # A solvable-but-unique fit needs rank 8: the second-smallest singular
    # value must be well away from zero relative to the largest.
    if sing[7] <= _RANK_RTOL * sing[0]:
        raise DegenerateAnchors("anchor configuration is rank deficient")

    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    if abs(h[2, 2]) <= _DET_EPS:
        raise DegenerateAnchors("fitted transform cannot be normalised")
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= _DET_EPS:
        raise DegenerateAnchors("fitted transform is singular")
    return RegistrationTransform(h)


def warp_frame(frame: np.ndarray, transform: RegistrationTransform, out_shape=None):
    """Resample ``frame`` through ``transform`` with bilinear interpolation.

    For every output pixel (x, y) the source location is
    ``transform @ (x, y, 1)`` after perspective division; samples falling
    outside the frame contribute zero.  The identity transform returns the
    input values exactly.

    Args:
        frame: [H, W] or [H, W, C] float array.
        transform: output->input projective map.
        out_shape: (height, width) of the output; defaults to the input size.

    Returns:
        Array of out_shape (+ channels) in the input's floating dtype.
    """
    f = np.asarray(frame)
    if f.ndim not in (2, 3):
        raise ShapeMismatch(f"expected [H,W] or [H,W,C] frame, got shape {f.shape}")
    m = transform.matrix
    if abs(np.linalg.det(m)) <= _DET_EPS:
        raise SingularTransform("cannot warp through a singular transform")

    in_h, in_w = f.shape[:2]
    out_h, out_w = (in_h, in_w) if out_shape is None else (int(out_shape[0]), int(out_shape[1]))

    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    denom = m[2, 0] * gx + m[2, 1] * gy + m[2, 2]
    safe = np.abs(denom) > _DET_EPS
    denom = np.where(safe, denom, 1.0)
    u = (m[0, 0] * gx + m[0, 1] * gy + m[0, 2]) / denom
    v = (m[1, 0] * gx + m[1, 1] * gy + m[1, 2]) / denom

    values = f.astype(np.float64, copy=False)
    if values.ndim == 2:
        values = values[:, :, None]

    x0 = np.floor(u)
    y0 = np.floor(v)
    wx = u - x0
    wy = v - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    out = np.zeros((out_h, out_w, values.shape[2]), dtype=np.float64)
    corners = (
        (x0, y0, (1.0 - wx) * (1.0 - wy)),
        (x0 + 1, y0, wx * (1.0 - wy)),
        (x0, y0 + 1, (1.0 - wx) * wy),
        (x0 + 1, y0 + 1, wx * wy),
    )
    for cx, cy, w in corners:
        inside = safe & (cx >= 0) & (cx < in_w) & (cy >= 0) & (cy < in_h)
        cxc = np.clip(cx, 0, in_w - 1)
        cyc = np.clip(cy, 0, in_h - 1)
        contrib = values[cyc, cxc] * (w * inside)[:, :, None]
        out += contrib

    if f.ndim == 2:
        out = out[:, :, 0]
    if f.dtype == np.float32:
        return out.astype(np.float32)
    return out
