"""Fusion, decision rule and PAD error rates against counting oracles."""

import numpy as np
import pytest

from padstream.errors import ConfigError, MissingClass
from padstream.metrics import (
    FusedScore,
    MetricsReport,
    ScorePair,
    acer_from_rates,
    compute_metrics,
    decide,
    fuse_scores,
    sweep_threshold,
)


def _random_scored(rng, n=200):
    """(FusedScore, label) samples over live + two attack types."""
    out = []
    for _ in range(n):
        label = rng.choice(["live", "print", "replay"])
        centre = 1.3 if label == "live" else 0.7
        live = float(np.clip(rng.normal(centre, 0.45), 0.0, 2.0))
        out.append((FusedScore(live_sum=live, spoof_sum=2.0 - live), str(label)))
    return out


def _counting_oracle(scored, threshold):
    tp = tn = fp = fn = 0
    per_type = {}
    for score, label in scored:
        live = score.live_sum > threshold
        if label == "live":
            tp, fn = (tp + 1, fn) if live else (tp, fn + 1)
        else:
            total, accepted = per_type.get(label, (0, 0))
            per_type[label] = (total + 1, accepted + (1 if live else 0))
            fp, tn = (fp + 1, tn) if live else (fp, tn + 1)
    return {
        "apcer": fp / (fp + tn),
        "bpcer": fn / (fn + tp),
        "counts": {"tp": tp, "tn": tn, "fp": fp, "fn": fn},
        "by_type": {t: a / n for t, (n, a) in per_type.items()},
    }


# ---------------------------------------------------------------- score types


def test_score_pair_must_be_a_probability_pair():
    ScorePair(0.25, 0.75)
    with pytest.raises(ConfigError):
        ScorePair(0.6, 0.6)
    with pytest.raises(ConfigError):
        ScorePair(-0.2, 1.2)
    with pytest.raises(ConfigError):
        ScorePair(float("nan"), 1.0)


def test_fuse_sums_elementwise():
    fused = fuse_scores(ScorePair(0.9, 0.1), ScorePair(0.7, 0.3))
    assert fused.live_sum == pytest.approx(1.6)
    assert fused.spoof_sum == pytest.approx(0.4)


def test_fuse_is_commutative(rng):
    for _ in range(50):
        a = float(rng.random())
        b = float(rng.random())
        p, q = ScorePair(a, 1 - a), ScorePair(b, 1 - b)
        assert fuse_scores(p, q) == fuse_scores(q, p)


def test_fused_pair_sums_to_two(rng):
    for _ in range(20):
        a, b = float(rng.random()), float(rng.random())
        fused = fuse_scores(ScorePair(a, 1 - a), ScorePair(b, 1 - b))
        assert fused.live_sum + fused.spoof_sum == pytest.approx(2.0, abs=1e-6)


def test_decide_threshold_and_tie_rule():
    assert decide(FusedScore(1.6, 0.4), 1.0) == "live"
    assert decide(FusedScore(1.0, 1.0), 1.0) == "spoof"  # ties are spoof
    assert decide(FusedScore(0.4, 1.6), 1.0) == "spoof"


# ---------------------------------------------------------------- error rates


def test_acer_reproduces_published_rows():
    # percentages 0.9/1.5 -> 1.2 and 3.3/0.9 -> 2.1, as fractions
    assert acer_from_rates(0.009, 0.015) == pytest.approx(0.012, abs=1e-12)
    assert acer_from_rates(0.033, 0.009) == pytest.approx(0.021, abs=1e-12)


def test_compute_metrics_reproduces_published_rows_from_counts():
    scored = []
    # 1000 attacks, 9 accepted -> apcer 0.009; 1000 live, 15 rejected -> bpcer 0.015
    scored += [(FusedScore(1.5, 0.5), "print")] * 9
    scored += [(FusedScore(0.5, 1.5), "print")] * 991
    scored += [(FusedScore(1.5, 0.5), "live")] * 985
    scored += [(FusedScore(0.5, 1.5), "live")] * 15
    report = compute_metrics(scored, threshold=1.0)
    assert report.apcer == pytest.approx(0.009, abs=1e-12)
    assert report.bpcer == pytest.approx(0.015, abs=1e-12)
    assert report.acer == pytest.approx(0.012, abs=1e-12)


def test_all_correct_means_zero_error():
    scored = [(FusedScore(1.8, 0.2), "live")] * 3 + [(FusedScore(0.2, 1.8), "print")] * 3
    report = compute_metrics(scored, threshold=1.0)
    assert report.apcer == 0.0 and report.bpcer == 0.0 and report.acer == 0.0
    assert report.accuracy == 1.0


def test_compute_metrics_matches_counting_oracle_exactly():
    rng = np.random.default_rng(21)
    for _ in range(100):
        scored = _random_scored(rng, n=int(rng.integers(20, 200)))
        labels = {label for _, label in scored}
        if "live" not in labels or labels == {"live"}:
            continue
        threshold = float(rng.uniform(0.2, 1.8))
        report = compute_metrics(scored, threshold=threshold)
        want = _counting_oracle(scored, threshold)
        assert report.apcer == want["apcer"]
        assert report.bpcer == want["bpcer"]
        assert report.counts == want["counts"]
        assert report.apcer_by_type == want["by_type"]
        assert sum(report.counts.values()) == len(scored)
        assert report.acer == (report.apcer + report.bpcer) / 2
        assert report.hter == report.acer and report.far == report.apcer


def test_worst_type_apcer_bounds_the_aggregate():
    rng = np.random.default_rng(5)
    for _ in range(30):
        scored = _random_scored(rng, n=60)
        try:
            report = compute_metrics(scored, threshold=1.0)
        except MissingClass:
            continue
        assert report.apcer_worst >= report.apcer - 1e-15


def test_compute_metrics_needs_both_classes():
    live_only = [(FusedScore(1.5, 0.5), "live")] * 4
    with pytest.raises(MissingClass):
        compute_metrics(live_only, threshold=1.0)
    attacks_only = [(FusedScore(0.5, 1.5), "print")] * 4
    with pytest.raises(MissingClass):
        compute_metrics(attacks_only, threshold=1.0)


def test_report_serialises_flat():
    report = compute_metrics(
        [(FusedScore(1.5, 0.5), "live"), (FusedScore(0.5, 1.5), "replay")], threshold=1.0
    )
    payload = report.to_dict()
    for key in ("apcer", "bpcer", "acer", "far", "frr", "hter", "threshold", "counts"):
        assert key in payload
    assert payload["apcer_by_type"] == {"replay": 0.0}
    assert isinstance(report, MetricsReport)


# ---------------------------------------------------------------- sweeping


def test_sweep_perfectly_separated_scores():
    scores = [1.8, 1.7, 0.3, 0.2]
    flags = [True, True, False, False]
    threshold, curve = sweep_threshold(scores, flags)
    far, frr = _far_frr(scores, flags, threshold)
    assert far == 0.0 and frr == 0.0
    assert 0.3 < threshold < 1.7
    assert len(curve) == len(set(scores)) + 1


def test_sweep_symmetric_overlap_picks_midpoint():
    # live live-sums {1.6, 1.4}, spoof live-sums {1.5, 1.3}: EER is 0.5/0.5
    scores = [1.6, 1.4, 1.5, 1.3]
    flags = [True, True, False, False]
    threshold, _ = sweep_threshold(scores, flags)
    assert threshold == pytest.approx(1.45)
    far, frr = _far_frr(scores, flags, threshold)
    assert far == 0.5 and frr == 0.5


def test_sweep_single_pair_threshold_sits_between():
    threshold, _ = sweep_threshold([1.4, 0.6], [True, False])
    assert 0.6 < threshold < 1.4


def test_sweep_matches_exhaustive_oracle():
    rng = np.random.default_rng(31)
    for _ in range(40):
        n = int(rng.integers(4, 60))
        scores = np.round(rng.uniform(0, 2, size=n), 2)
        flags = rng.random(n) < 0.5
        if flags.all() or not flags.any():
            continue
        threshold, curve = sweep_threshold(scores, flags)
        best_gap = abs(np.subtract(*_far_frr(scores, flags, threshold)))
        for t, far, frr in curve:
            want_far, want_frr = _far_frr(scores, flags, t)
            assert far == want_far and frr == want_frr
            assert abs(far - frr) >= best_gap - 1e-15
            if abs(far - frr) == best_gap:
                assert threshold <= t  # smallest minimiser wins


def test_sweep_curve_is_monotone():
    rng = np.random.default_rng(8)
    scores = rng.uniform(0, 2, size=50)
    flags = rng.random(50) < 0.5
    _, curve = sweep_threshold(scores, flags)
    fars = [far for _, far, _ in curve]
    frrs = [frr for _, _, frr in curve]
    assert fars == sorted(fars, reverse=True)
    assert frrs == sorted(frrs)


def test_sweep_needs_both_classes():
    with pytest.raises(MissingClass):
        sweep_threshold([0.5, 0.6], [True, True])


def _far_frr(scores, flags, threshold):
    scores = np.asarray(scores, dtype=float)
    flags = np.asarray(flags, dtype=bool)
    accepted = scores > threshold
    far = float((accepted & ~flags).sum()) / max(1, (~flags).sum())
    frr = float((~accepted & flags).sum()) / max(1, flags.sum())
    return far, frr
