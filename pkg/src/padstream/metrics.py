"""Presentation-attack detection decisions and ISO-style error rates.

Conventions:

* class index 0 = live, 1 = spoof; every score is a (live, spoof) softmax
  pair, and fusion sums the two branches' pairs element-wise;
* a sample is accepted as live iff its live score strictly exceeds the
  decision threshold (ties count as spoof);
* live is the "positive" class: a spoof accepted as live is a false
  positive, a live rejected is a false negative.

Rates: APCER = FAR = fp / (fp + tn) over attacks, BPCER = FRR = fn /
(fn + tp) over live, ACER = (APCER + BPCER) / 2, HTER = (FAR + FRR) / 2.
APCER is also reported per attack type, plus the worst case over types.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MissingClass

LIVE = "live"


@dataclass(frozen=True)
class ScorePair:
    """Softmax output of one branch for one clip."""

    live: float
    spoof: float

    def __post_init__(self):
        if not (np.isfinite(self.live) and np.isfinite(self.spoof)):
            raise ConfigError("score pair contains non-finite values")
        if self.live < -1e-9 or self.spoof < -1e-9:
            raise ConfigError("score pair must be non-negative")
        if abs(self.live + self.spoof - 1.0) > 1e-6:
            raise ConfigError(
                f"score pair must sum to 1, got {self.live + self.spoof}"
            )


@dataclass(frozen=True)
class FusedScore:
    """Element-wise sum of branch score pairs (live_sum in [0, n_branches])."""

    live_sum: float
    spoof_sum: float

    def __post_init__(self):
        if not (np.isfinite(self.live_sum) and np.isfinite(self.spoof_sum)):
            raise ConfigError("fused score contains non-finite values")


def fuse_scores(*pairs: ScorePair) -> FusedScore:
    """Sum one or more branch score pairs into a fused score."""
    if not pairs:
        raise ConfigError("fuse_scores needs at least one score pair")
    return FusedScore(
        live_sum=float(sum(p.live for p in pairs)),
        spoof_sum=float(sum(p.spoof for p in pairs)),
    )


def decide(score: FusedScore, threshold: float) -> str:
    """'live' iff live_sum strictly exceeds the threshold, else 'spoof'."""
    return LIVE if score.live_sum > threshold else "spoof"


@dataclass
class MetricsReport:
    """Error rates plus raw confusion counts for one evaluation."""

    apcer: float
    bpcer: float
    acer: float
    far: float
    frr: float
    hter: float
    accuracy: float
    threshold: float
    counts: dict
    apcer_by_type: dict = field(default_factory=dict)

    @property
    def apcer_worst(self) -> float:
        if not self.apcer_by_type:
            return self.apcer
        return max(self.apcer_by_type.values())

    def to_dict(self) -> dict:
        return {
            "apcer": self.apcer,
            "bpcer": self.bpcer,
            "acer": self.acer,
            "far": self.far,
            "frr": self.frr,
            "hter": self.hter,
            "accuracy": self.accuracy,
            "threshold": self.threshold,
            "counts": dict(self.counts),
            "apcer_by_type": dict(self.apcer_by_type),
            "apcer_worst": self.apcer_worst,
        }


def acer_from_rates(apcer: float, bpcer: float) -> float:
    """Mean of the two PAD error rates."""
    return (apcer + bpcer) / 2.0


def compute_metrics(scored, threshold: float = 1.0) -> MetricsReport:
    """Confusion counts and error rates for (FusedScore, label) pairs.

    Labels are dataset labels ('live' or an attack type); any non-live label
    counts as an attack, and per-type APCER is broken out by label.

    Raises MissingClass when either the live or the attack side is empty.
    """
    scored = list(scored)
    tp = tn = fp = fn = 0
    by_type_total = {}
    by_type_fp = {}
    for score, label in scored:
        predicted_live = decide(score, threshold) == LIVE
        if label == LIVE:
            if predicted_live:
                tp += 1
            else:
                fn += 1
        else:
            by_type_total[label] = by_type_total.get(label, 0) + 1
            if predicted_live:
                fp += 1
                by_type_fp[label] = by_type_fp.get(label, 0) + 1
            else:
                tn += 1
    n_live = tp + fn
    n_attack = fp + tn
    if n_live == 0 or n_attack == 0:
        raise MissingClass(
            f"evaluation needs both classes: {n_live} live, {n_attack} attack samples"
        )
    apcer = fp / n_attack
    bpcer = fn / n_live
    return MetricsReport(
        apcer=apcer,
        bpcer=bpcer,
        acer=acer_from_rates(apcer, bpcer),
        far=apcer,
        frr=bpcer,
        hter=acer_from_rates(apcer, bpcer),
        accuracy=(tp + tn) / len(scored),
        threshold=float(threshold),
        counts={"tp": tp, "tn": tn, "fp": fp, "fn": fn},
        apcer_by_type={
            t: by_type_fp.get(t, 0) / n for t, n in sorted(by_type_total.items())
        },
    )


def sweep_threshold(live_scores, is_live):
    """Find the equal-error-rate operating point over candidate thresholds.

    Candidates are the midpoints between consecutive distinct sorted scores,
    plus one sentinel below the minimum and one above the maximum (accept-all
    and reject-all).  Returns (threshold, curve) where curve is a list of
    (threshold, far, frr) rows and the returned threshold is the smallest
    candidate minimising |far - frr|.
    """
    scores = np.asarray(list(live_scores), dtype=np.float64)
    flags = np.asarray(list(is_live), dtype=bool)
    if scores.shape[0] != flags.shape[0]:
        raise ConfigError("scores and labels differ in length")
    n_live = int(flags.sum())
    n_attack = int((~flags).sum())
    if n_live == 0 or n_attack == 0:
        raise MissingClass("threshold sweep needs both live and attack samples")

    distinct = np.unique(scores)
    candidates = [distinct[0] - 1.0]
    candidates.extend((distinct[:-1] + distinct[1:]) / 2.0)
    candidates.append(distinct[-1] + 1.0)

    curve = []
    best = None
    for t in candidates:
        accepted = scores > t
        far = float(np.sum(accepted & ~flags)) / n_attack
        frr = float(np.sum(~accepted & flags)) / n_live
        curve.append((float(t), far, frr))
        gap = abs(far - frr)
        if best is None or gap < best[0] - 1e-15:
            best = (gap, float(t))
    return best[1], curve
