"""Static SVG figures: ROC curves and per-epoch attention-map panels."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .signal import EPOCH_SECONDS, WINDOW_SECONDS, WINDOWS_PER_EPOCH


def plot_roc(points, auc: float, best, path, title: str = "ROC") -> None:
    """ROC curve with the chance diagonal and the best operating point marked."""
    fpr = [1.0 - sp for _, _, sp in points]
    tpr = [se for _, se, _ in points]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(fpr, tpr, color="tab:blue", lw=1.5, label=f"AUC = {auc:.3f}")
    ax.plot([0, 1], [0, 1], ls="--", color="gray", lw=1, label="chance")
    if best is not None:
        t, se, sp = best
        ax.plot([1 - sp], [se], "o", color="tab:red",
                label=f"best th={t:.2f} (se={se:.2f}, sp={sp:.2f})")
    ax.set_xlabel("1 - specificity")
    ax.set_ylabel("sensitivity")
    ax.set_title(title)
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_attention_epoch(amap, path, trace=None, rate_hz: float = 128.0,
                         threshold: float = None, window_labels=None,
                         intervals=None, title: str = "") -> None:
    """Per-epoch panel: optional EEG trace on top, attention map below.

    Shades manually labeled artifact windows on the trace, the localization
    threshold line, and the above-threshold intervals on the map.
    """
    rows = 2 if trace is not None else 1
    fig, axes = plt.subplots(rows, 1, figsize=(9, 2.2 * rows), sharex=True)
    axes = np.atleast_1d(axes)
    if trace is not None:
        t = np.arange(len(trace)) / rate_hz
        axes[0].plot(t, trace, lw=0.4, color="black")
        axes[0].set_ylabel("EEG (uV)")
        if window_labels is not None:
            for k, lab in enumerate(window_labels):
                if lab == "artifact":
                    axes[0].axvspan(k * WINDOW_SECONDS, (k + 1) * WINDOW_SECONDS,
                                    color="tab:orange", alpha=0.25, lw=0)
    ax = axes[-1]
    steps = np.arange(amap.values.size) * amap.time_scale_s_per_step
    ax.plot(steps, amap.values, lw=0.9, color="tab:blue")
    if threshold is not None:
        ax.axhline(threshold, ls="--", color="tab:red", lw=1)
    if intervals:
        for s, e in intervals:
            ax.axvspan(s, e, color="tab:blue", alpha=0.3, lw=0)
    for k in range(1, WINDOWS_PER_EPOCH):
        ax.axvline(k * WINDOW_SECONDS, color="gray", lw=0.5, alpha=0.5)
    ax.set_xlim(0, EPOCH_SECONDS)
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("time in epoch (s)")
    ax.set_ylabel("attention")
    if title:
        axes[0].set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_training_history(history, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    epochs = [h["epoch"] for h in history]
    ax.plot(epochs, [h["train_loss"] for h in history], label="train")
    ax.plot(epochs, [h["val_loss"] for h in history], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
