"""Matplotlib renderings saved next to the delimited report files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")  # allow headless plotting
import matplotlib.pyplot as plt
import numpy as np


def save_curves_figure(report, path: str) -> str:
    """Loss and accuracy curves over epochs."""
    epochs = np.arange(1, report.epochs_run + 1)
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, report.train_loss, label="train")
    ax_loss.plot(epochs, report.val_loss, label="validation")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_loss.grid(True, alpha=0.3)
    ax_acc.plot(epochs, report.train_acc, label="train")
    ax_acc.plot(epochs, report.val_acc, label="validation")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_acc.legend()
    ax_acc.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_confusion_figure(matrix, path: str) -> str:
    """Confusion matrix heatmap; cell counts annotated when legible."""
    counts = matrix.counts
    n = counts.shape[0]
    size = max(4.0, min(12.0, 0.45 * n + 2.0))
    fig, ax = plt.subplots(figsize=(size, size))
    im = ax.imshow(counts, cmap="Blues")
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_xticks(range(n), matrix.class_names, rotation=90, fontsize=7)
    ax.set_yticks(range(n), matrix.class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if n <= 16:
        threshold = counts.max() / 2 if counts.max() else 0
        for i in range(n):
            for j in range(n):
                color = "white" if counts[i, j] > threshold else "black"
                ax.text(j, i, str(int(counts[i, j])), ha="center", va="center",
                        color=color, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_histogram_figure(histogram, path: str) -> str:
    """Per-class sample count bars."""
    n = len(histogram.class_names)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.3 * n + 2.0), 4))
    ax.bar(range(n), histogram.counts)
    ax.set_xticks(range(n), histogram.class_names, rotation=90, fontsize=7)
    ax.set_ylabel("samples")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
