"""Report figures rendered to files (headless Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_error_tradeoff(path, curve, chosen_threshold: float = None):
    """FAR and FRR versus decision threshold, with the operating point marked."""
    ts = [row[0] for row in curve]
    fars = [row[1] for row in curve]
    frrs = [row[2] for row in curve]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, fars, label="FAR (attack accepted)", color="tab:red")
    ax.plot(ts, frrs, label="FRR (live rejected)", color="tab:blue")
    if chosen_threshold is not None:
        ax.axvline(chosen_threshold, color="gray", linestyle="--", linewidth=1,
                   label=f"threshold = {chosen_threshold:.3f}")
    ax.set_xlabel("decision threshold on live score")
    ax.set_ylabel("error rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(str(path), dpi=120)
    plt.close(fig)


def save_score_histogram(path, rows, threshold: float = None):
    """Histogram of fused live scores, one colour per ground-truth label."""
    by_label = {}
    for row in rows:
        by_label.setdefault(row["label"], []).append(row["live_sum"])
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = {"live": "tab:green", "print": "tab:orange", "replay": "tab:purple"}
    for label in sorted(by_label):
        ax.hist(
            by_label[label],
            bins=20,
            alpha=0.6,
            label=label,
            color=colors.get(label),
        )
    if threshold is not None:
        ax.axvline(threshold, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel("live score (sum over branches)")
    ax.set_ylabel("clips")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(str(path), dpi=120)
    plt.close(fig)


def save_training_curves(path, histories: dict):
    """Loss and eval ACER per epoch for each trained branch."""
    fig, (ax_loss, ax_acer) = plt.subplots(1, 2, figsize=(10, 4))
    for branch, history in histories.items():
        epochs = [row["epoch"] for row in history.epochs]
        ax_loss.plot(epochs, [row["loss"] for row in history.epochs], label=branch)
        ax_acer.plot(
            epochs, [row["eval"]["acer"] for row in history.epochs], label=branch
        )
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_loss.legend(loc="best")
    ax_acer.set_xlabel("epoch")
    ax_acer.set_ylabel("eval ACER")
    ax_acer.set_ylim(-0.02, 1.02)
    ax_acer.legend(loc="best")
    fig.tight_layout()
    fig.savefig(str(path), dpi=120)
    plt.close(fig)
