"""Augmentation draws, the branch training loop, and model evaluation."""

import json

import numpy as np
import pytest
import torch

from padstream.backbone import BackboneConfig
from padstream.diff_head import build_diff_model
from padstream.errors import ConfigError, EmptyDataset, SingleClassDataset, TooFewFrames
from padstream.preprocess import (
    FrameSequence,
    PreprocessConfig,
    deviation_matrix,
    preprocess_clip,
    resize_bilinear,
    select_keyframes,
    select_keyframes_from_deviations,
)
from padstream.synthetic import SynthConfig, generate_clip
from padstream.temporal_head import build_multiframe_model
from padstream.training import (
    HyperParams,
    PreparedClip,
    augment_spatial,
    augment_temporal,
    branch_metrics,
    crop_window,
    evaluate_models,
    prepare_clip,
    prepare_clips,
    score_clips,
    train_branch,
)

TINY = BackboneConfig(in_channels=3, stage_channels=(4, 4, 4, 4, 4), blocks_per_stage=(1, 1, 1, 1, 1))


def _mini_clips(n_per_class=3, n_frames=6, size=32, seed=0):
    """Half live / half print prepared clips with a brightness cue."""
    rng = np.random.default_rng(seed)
    clips = []
    for label, offset in (("live", 0.25), ("print", 0.0)):
        for i in range(n_per_class):
            frames = (rng.random((n_frames, size, size, 3)) * 0.5 + offset).astype(np.float32)
            clips.append(
                PreparedClip(
                    clip_id=f"{label}_{i}",
                    label=label,
                    frames=frames,
                    deviations=deviation_matrix(frames),
                )
            )
    return clips


def _tiny_multi(seed=0):
    return build_multiframe_model(TINY, seed=seed, fusion_channels=4, lstm_hidden=3)


def _tiny_diff(k=2, seed=0):
    return build_diff_model(TINY, k=k, seed=seed, fusion_channels=4)


def _seq(frames):
    return FrameSequence(
        frames=frames, source_indices=list(range(frames.shape[0])), label="live", clip_id="c"
    )


# ---------------------------------------------------------------- augmenting


def test_crop_window_full_scale_is_the_whole_frame(rng):
    assert crop_window(rng, 64, (1.0, 1.0)) == (0, 0, 64, 64)


def test_crop_window_matches_documented_draw_order():
    a = np.random.default_rng(5)
    x0, y0, w, h = crop_window(a, 64, (0.5, 0.8))
    b = np.random.default_rng(5)
    scale = b.uniform(0.5, 0.8)
    want_w = min(max(1, int(round(scale * 64))), 64)
    want_x0 = int(b.integers(0, 64 - want_w + 1))
    want_y0 = int(b.integers(0, 64 - want_w + 1))
    assert (x0, y0, w, h) == (want_x0, want_y0, want_w, want_w)


def test_crop_window_rejects_bad_scale_range(rng):
    with pytest.raises(ConfigError):
        crop_window(rng, 64, (0.0, 1.0))
    with pytest.raises(ConfigError):
        crop_window(rng, 64, (0.9, 0.4))


def test_spatial_augment_at_unit_scale_is_identity(rng):
    frames = rng.random((3, 32, 32, 3)).astype(np.float32)
    out = augment_spatial(_seq(frames), rng, scale_range=(1.0, 1.0), flip_prob=0.0)
    np.testing.assert_array_equal(out.frames, frames)
    assert out.source_indices == [0, 1, 2]


def test_spatial_augment_flips_every_frame_together(rng):
    frames = rng.random((4, 32, 32, 3)).astype(np.float32)
    out = augment_spatial(_seq(frames), rng, scale_range=(1.0, 1.0), flip_prob=1.0)
    np.testing.assert_array_equal(out.frames, frames[:, :, ::-1, :])


def test_spatial_augment_crop_matches_slice_then_resize():
    frames = np.random.default_rng(3).random((2, 64, 64, 3)).astype(np.float32)
    rng = np.random.default_rng(7)
    out = augment_spatial(_seq(frames), rng, scale_range=(0.5, 0.5), flip_prob=0.0)
    probe = np.random.default_rng(7)
    x0, y0, w, h = crop_window(probe, 64, (0.5, 0.5))
    for t in range(2):
        want = resize_bilinear(frames[t, y0 : y0 + h, x0 : x0 + w], 64, 64)
        np.testing.assert_array_equal(out.frames[t], want)


def test_temporal_augment_without_jitter_is_the_greedy_pick(rng):
    frames = rng.random((12, 8, 8, 3))
    assert augment_temporal(frames, rng, k=3, jitter=0) == select_keyframes(frames, 3)


def test_temporal_augment_two_frames_is_fixed(rng):
    frames = rng.random((2, 8, 8, 3))
    for _ in range(5):
        assert augment_temporal(frames, rng, k=1) == [0, 1]


def test_temporal_augment_always_yields_valid_indices():
    rng = np.random.default_rng(13)
    frames = np.random.default_rng(0).random((15, 6, 6, 3))
    for _ in range(100):
        picks = augment_temporal(frames, rng, k=4, jitter=1)
        assert len(picks) == 5
        assert picks[0] == 0
        assert picks == sorted(set(picks))
        assert all(0 <= p < 15 for p in picks)


def test_temporal_augment_needs_enough_frames(rng):
    with pytest.raises(TooFewFrames):
        augment_temporal(np.zeros((3, 4, 4, 3)), rng, k=4)


# ---------------------------------------------------------------- preparing


def test_prepared_clip_reproduces_the_one_shot_pipeline():
    clip = generate_clip("live", 77, SynthConfig(frames_per_clip=12, frame_size=128, seed=0))
    cfg = PreprocessConfig(k=4, out_size=64)
    prepared = prepare_clip(clip, cfg)
    seq, stack = preprocess_clip(clip, cfg)

    picks = select_keyframes_from_deviations(prepared.deviations, 4)
    assert picks == seq.source_indices
    np.testing.assert_array_equal(prepared.frames[picks], seq.frames)
    gathered = prepared.frames[picks]
    diffs = np.clip(
        np.concatenate([gathered[i + 1] - gathered[i] for i in range(4)], axis=2), -1, 1
    )
    np.testing.assert_array_equal(diffs, stack.diffs)


def test_prepare_clips_cache_round_trip(tmp_path):
    clip = generate_clip("print", 5, SynthConfig(frames_per_clip=11, frame_size=64, seed=0))
    cfg = PreprocessConfig(k=2, out_size=32)
    cold = prepare_clips([clip], cfg, cache_dir=tmp_path / "cache")
    files = sorted(p.name for p in (tmp_path / "cache").iterdir())
    assert any(name.endswith(".frames.tnsr") for name in files)
    warm = prepare_clips([clip], cfg, cache_dir=tmp_path / "cache")
    np.testing.assert_array_equal(np.asarray(cold[0].frames), np.asarray(warm[0].frames))
    np.testing.assert_array_equal(cold[0].deviations, warm[0].deviations)
    no_cache = prepare_clips([clip], cfg)
    np.testing.assert_array_equal(np.asarray(warm[0].frames), no_cache[0].frames)


# ---------------------------------------------------------------- training


def test_hyper_params_validation():
    with pytest.raises(ConfigError):
        HyperParams(lr=-0.1)
    with pytest.raises(ConfigError):
        HyperParams(momentum=1.0)
    with pytest.raises(ConfigError):
        HyperParams(epochs=0)
    with pytest.raises(ConfigError):
        HyperParams(seed=-3)


def test_training_needs_both_classes():
    clips = _mini_clips()
    with pytest.raises(EmptyDataset):
        train_branch("diff", _tiny_diff(), [], HyperParams(epochs=1), k=2)
    live_only = [c for c in clips if c.label == "live"]
    with pytest.raises(SingleClassDataset):
        train_branch("diff", _tiny_diff(), live_only, HyperParams(epochs=1), k=2)
    with pytest.raises(ConfigError):
        train_branch("bogus", _tiny_diff(), clips, HyperParams(epochs=1), k=2)


def test_zero_learning_rate_leaves_parameters_unchanged():
    clips = _mini_clips()
    model = _tiny_diff(seed=1)
    before = {n: p.detach().clone() for n, p in model.named_parameters()}
    train_branch("diff", model, clips, HyperParams(lr=0.0, epochs=2, seed=0), k=2)
    for name, p in model.named_parameters():
        assert torch.equal(p, before[name]), name


def test_same_seed_training_is_identical():
    clips = _mini_clips()
    hp = HyperParams(lr=0.02, epochs=3, seed=11)
    runs = []
    for _ in range(2):
        model = _tiny_diff(seed=4)
        history = train_branch("diff", model, clips, hp, k=2)
        runs.append((history.losses, {n: p.detach().clone() for n, p in model.state_dict().items()}))
    assert runs[0][0] == runs[1][0]
    for name in runs[0][1]:
        assert torch.equal(runs[0][1][name], runs[1][1][name]), name


def test_loss_decreases_for_every_seed():
    for seed in range(5):
        clips = _mini_clips(seed=seed)
        model = _tiny_diff(seed=seed)
        hp = HyperParams(
            lr=0.05, epochs=8, seed=seed, spatial_augment=False, temporal_augment=False
        )
        history = train_branch("diff", model, clips, hp, k=2)
        assert history.losses[-1] < 0.5 * history.losses[0]


def test_multi_branch_trains_and_records_history(tmp_path):
    clips = _mini_clips(n_per_class=2)
    path = tmp_path / "history.jsonl"
    history = train_branch(
        "multi", _tiny_multi(), clips, HyperParams(epochs=2, seed=0), k=2, history_path=path
    )
    assert history.branch == "multi"
    assert len(history.epochs) == 2
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [0, 1]
    for row in rows:
        assert {"loss", "train_accuracy", "eval", "lr", "seconds"} <= set(row)
    assert history.best_epoch >= 0
    assert 0.0 <= history.final_train_accuracy <= 1.0


def test_early_stop_on_train_accuracy():
    clips = _mini_clips()
    history = train_branch(
        "diff",
        _tiny_diff(),
        clips,
        HyperParams(epochs=50, early_stop_train_acc=0.0, seed=0),
        k=2,
    )
    assert len(history.epochs) == 1


# ---------------------------------------------------------------- evaluating


def test_score_clips_is_batch_size_invariant():
    clips = _mini_clips()
    model = _tiny_diff(seed=2)
    small = score_clips(model, "diff", clips, k=2, batch_size=2)
    big = score_clips(model, "diff", clips, k=2, batch_size=64)
    for a, b in zip(small, big):
        assert a.live == pytest.approx(b.live, abs=1e-6)


def test_scores_do_not_depend_on_the_label_field():
    clips = _mini_clips()
    model = _tiny_diff(seed=3)
    base = score_clips(model, "diff", clips[:1], k=2)[0]
    relabelled = PreparedClip(
        clip_id=clips[0].clip_id,
        label="replay",
        frames=clips[0].frames,
        deviations=clips[0].deviations,
    )
    again = score_clips(model, "diff", [relabelled], k=2)[0]
    assert base == again


def test_evaluate_single_branch_uses_half_threshold():
    clips = _mini_clips()
    report, rows = evaluate_models(clips, diff_model=_tiny_diff(seed=5), k=2)
    assert report.threshold == 0.5
    assert all("diff_live" in row and "multi_live" not in row for row in rows)
    assert all(row["decision"] in ("live", "spoof") for row in rows)


def test_evaluate_fused_uses_unit_threshold_and_both_scores():
    clips = _mini_clips(n_per_class=2)
    report, rows = evaluate_models(
        clips, multi_model=_tiny_multi(), diff_model=_tiny_diff(seed=6), k=2
    )
    assert report.threshold == 1.0
    for row in rows:
        assert row["live_sum"] == pytest.approx(row["multi_live"] + row["diff_live"], abs=1e-9)
        assert 0.0 <= row["live_sum"] <= 2.0


def test_evaluate_threshold_override_and_errors():
    clips = _mini_clips(n_per_class=2)
    report, _ = evaluate_models(clips, diff_model=_tiny_diff(seed=7), k=2, threshold=0.9)
    assert report.threshold == 0.9
    with pytest.raises(ConfigError):
        evaluate_models(clips, k=2)
    with pytest.raises(EmptyDataset):
        evaluate_models([], diff_model=_tiny_diff(), k=2)


def test_branch_metrics_runs_on_prepared_clips():
    clips = _mini_clips(n_per_class=2)
    report = branch_metrics(_tiny_diff(seed=8), "diff", clips, k=2)
    assert report.threshold == 0.5
    assert sum(report.counts.values()) == len(clips)
