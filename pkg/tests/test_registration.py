"""Projective fit + warp against worked examples and a per-pixel oracle."""

import numpy as np
import pytest

from padstream.errors import DegenerateAnchors, LengthMismatch, ShapeMismatch, SingularTransform
from padstream.registration import RegistrationTransform, fit_registration, warp_frame

UNIT_SQUARE = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


def _brute_warp(frame, matrix, out_shape=None):
    """Per-pixel bilinear resampling, zero outside; the reference semantics."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim == 2:
        f = f[:, :, None]
    in_h, in_w, ch = f.shape
    out_h, out_w = (in_h, in_w) if out_shape is None else out_shape
    out = np.zeros((out_h, out_w, ch))
    for y in range(out_h):
        for x in range(out_w):
            denom = matrix[2, 0] * x + matrix[2, 1] * y + matrix[2, 2]
            if abs(denom) < 1e-12:
                continue
            u = (matrix[0, 0] * x + matrix[0, 1] * y + matrix[0, 2]) / denom
            v = (matrix[1, 0] * x + matrix[1, 1] * y + matrix[1, 2]) / denom
            x0, y0 = int(np.floor(u)), int(np.floor(v))
            wx, wy = u - x0, v - y0
            acc = np.zeros(ch)
            for dy, dx, w in (
                (0, 0, (1 - wx) * (1 - wy)),
                (0, 1, wx * (1 - wy)),
                (1, 0, (1 - wx) * wy),
                (1, 1, wx * wy),
            ):
                yy, xx = y0 + dy, x0 + dx
                if 0 <= xx < in_w and 0 <= yy < in_h:
                    acc += w * f[yy, xx]
            out[y, x] = acc
    if np.asarray(frame).ndim == 2:
        return out[:, :, 0]
    return out


def _random_homography(rng):
    m = np.eye(3)
    m[:2, :2] += rng.uniform(-0.15, 0.15, size=(2, 2))
    m[:2, 2] = rng.uniform(-3.0, 3.0, size=2)
    m[2, :2] = rng.uniform(-0.002, 0.002, size=2)
    return m / m[2, 2]


# ---------------------------------------------------------------- fitting


def test_fit_identity_from_unit_square():
    t = fit_registration(UNIT_SQUARE, UNIT_SQUARE)
    assert np.allclose(t.matrix, np.eye(3), atol=1e-9)
    assert t.matrix[2, 2] == pytest.approx(1.0)


def test_fit_pure_translation():
    dst = UNIT_SQUARE + np.array([5.0, 0.0])
    t = fit_registration(UNIT_SQUARE, dst)
    expected = np.array([[1.0, 0.0, 5.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(t.matrix, expected, atol=1e-9)


def test_fit_recovers_known_homography_from_six_points():
    rng = np.random.default_rng(12)
    points = np.array(
        [(0.0, 0.0), (10.0, 0.0), (10.0, 8.0), (0.0, 8.0), (5.0, 3.0), (2.0, 7.0)]
    )
    for _ in range(20):
        h = _random_homography(rng)
        hom = np.concatenate([points, np.ones((6, 1))], axis=1) @ h.T
        dst = hom[:, :2] / hom[:, 2:3]
        t = fit_registration(points, dst)
        assert np.abs(t.matrix - h).max() < 1e-6
        reproj = t.apply(points)
        assert np.abs(reproj - dst).max() < 1e-6


def test_fit_four_exact_points_reproject_exactly():
    rng = np.random.default_rng(3)
    for _ in range(20):
        h = _random_homography(rng)
        hom = np.concatenate([UNIT_SQUARE * 20, np.ones((4, 1))], axis=1) @ h.T
        dst = hom[:, :2] / hom[:, 2:3]
        t = fit_registration(UNIT_SQUARE * 20, dst)
        assert np.abs(t.apply(UNIT_SQUARE * 20) - dst).max() < 1e-7


def test_fit_rejects_mismatched_lengths():
    with pytest.raises(LengthMismatch):
        fit_registration(UNIT_SQUARE, UNIT_SQUARE[:3])


def test_fit_rejects_too_few_points():
    with pytest.raises(DegenerateAnchors):
        fit_registration(UNIT_SQUARE[:3], UNIT_SQUARE[:3])


def test_fit_rejects_collinear_points():
    src = np.array([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)])
    with pytest.raises(DegenerateAnchors):
        fit_registration(src, src + 1.0)


def test_fit_rejects_coincident_points():
    src = np.zeros((4, 2))
    with pytest.raises(DegenerateAnchors):
        fit_registration(src, UNIT_SQUARE)


# ---------------------------------------------------------------- transform


def test_transform_validates_shape_and_normalisation():
    with pytest.raises(ShapeMismatch):
        RegistrationTransform(np.eye(2))
    bad = np.eye(3) * 2.0  # m[2,2] == 2
    with pytest.raises(SingularTransform):
        RegistrationTransform(bad)
    singular = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularTransform):
        RegistrationTransform(singular)
    with pytest.raises(SingularTransform):
        RegistrationTransform(np.full((3, 3), np.nan))


def test_inverse_round_trips_points():
    rng = np.random.default_rng(44)
    for _ in range(10):
        t = RegistrationTransform(_random_homography(rng))
        pts = rng.uniform(-10, 10, size=(7, 2))
        back = t.inverse().apply(t.apply(pts))
        assert np.abs(back - pts).max() < 1e-9


# ---------------------------------------------------------------- warping


def test_warp_identity_is_exact():
    rng = np.random.default_rng(5)
    frame = rng.random((9, 7, 3)).astype(np.float32)
    out = warp_frame(frame, RegistrationTransform.identity())
    assert out.dtype == np.float32
    np.testing.assert_array_equal(out, frame)


def test_warp_integer_translation_shifts_content():
    # Matrix with tx = 3 samples input at (x + 3, y): content slides left.
    frame = np.arange(48, dtype=np.float64).reshape(6, 8)
    t = RegistrationTransform(np.array([[1.0, 0.0, 3.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    out = warp_frame(frame, t)
    np.testing.assert_array_equal(out[:, :5], frame[:, 3:])
    np.testing.assert_array_equal(out[:, 5:], 0.0)


def test_warp_rotation_of_checkerboard_matches_oracle():
    board = np.indices((4, 4)).sum(axis=0) % 2 * 1.0
    c = 1.5  # rotate 90 degrees about the pixel-grid centre
    rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    shift_in = np.array([[1.0, 0.0, c], [0.0, 1.0, c], [0.0, 0.0, 1.0]])
    shift_out = np.array([[1.0, 0.0, -c], [0.0, 1.0, -c], [0.0, 0.0, 1.0]])
    m = shift_in @ rot @ shift_out
    out = warp_frame(board, RegistrationTransform(m))
    np.testing.assert_allclose(out, _brute_warp(board, m), atol=1e-12)
    # a 90-degree grid rotation keeps the checkerboard pattern intact
    np.testing.assert_allclose(out, np.rot90(board, k=-1), atol=1e-12)


def test_warp_random_projective_matches_oracle():
    rng = np.random.default_rng(99)
    for _ in range(5):
        frame = rng.random((12, 10, 3))
        m = _random_homography(rng)
        out = warp_frame(frame, RegistrationTransform(m))
        np.testing.assert_allclose(out, _brute_warp(frame, m), atol=1e-9)


def test_warp_out_shape_controls_output_size():
    frame = np.ones((6, 6))
    out = warp_frame(frame, RegistrationTransform.identity(), out_shape=(3, 9))
    assert out.shape == (3, 9)
    np.testing.assert_array_equal(out[:, :6], 1.0)
    np.testing.assert_array_equal(out[:, 6:], 0.0)


def test_warp_rejects_bad_frame_rank():
    with pytest.raises(ShapeMismatch):
        warp_frame(np.zeros((2, 2, 3, 1)), RegistrationTransform.identity())
