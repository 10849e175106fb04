"""Figure rendering for report outputs.

Every CLI report path drops a PNG next to its CSV/JSON so results can be
eyeballed without a plotting session: confusion-matrix heatmaps, training
curves, amplitude spectra and the per-condition filter comparison.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .datasets import ActivityLabel

DPI = 150

plt.rcParams.update({
    "figure.autolayout": True,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})

_CLASS_NAMES = [a.name.lower() for a in ActivityLabel]


def _heatmap(ax, counts, title):
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=1, keepdims=True)
    totals[totals == 0] = 1.0
    frac = counts / totals
    ax.imshow(frac, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(_CLASS_NAMES)), _CLASS_NAMES, rotation=45, ha="right")
    ax.set_yticks(range(len(_CLASS_NAMES)), _CLASS_NAMES)
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    ax.set_title(title)
    ax.grid(False)
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            color = "white" if frac[i, j] > 0.5 else "black"
            ax.text(j, i, f"{int(counts[i, j])}", ha="center", va="center", color=color)


def confusion_figure(counts, path, title="confusion matrix") -> None:
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    _heatmap(ax, counts, title)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def comparison_figure(counts_a, counts_b, path,
                      title_a="with adaptation", title_b="without adaptation") -> None:
    fig, axes = plt.subplots(1, 2, figsize=(8.4, 3.8))
    _heatmap(axes[0], counts_a, title_a)
    _heatmap(axes[1], counts_b, title_b)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def training_curves(report_dict: dict, path) -> None:
    epochs = report_dict["epochs"]
    xs = [e["epoch"] for e in epochs]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(8.4, 3.2))
    ax_loss.plot(xs, [e["label_loss"] for e in epochs], label="label loss")
    if epochs and "domain_loss" in epochs[0]:
        ax_loss.plot(xs, [e["domain_loss"] for e in epochs], label="domain loss")
    ax_loss.plot(xs, [e["total"] for e in epochs], label="total", linestyle="--")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    for key, label in (("source_val_accuracy", "source val"),
                       ("target_val_accuracy", "target val")):
        if epochs and key in epochs[0]:
            ax_acc.plot(xs, [e[key] for e in epochs], label=label)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_acc.legend()
    sel = report_dict.get("selected_epoch")
    if sel:
        ax_acc.axvline(sel, color="gray", linestyle=":", linewidth=1)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def spectrum_figure(freqs, magnitudes, path, title="amplitude spectrum") -> None:
    fig, ax = plt.subplots(figsize=(5.4, 3.2))
    ax.plot(freqs, magnitudes)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("amplitude")
    ax.set_title(title)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def filter_comparison_figure(comparison_dict: dict, path) -> None:
    conds = list(comparison_dict["filtered"].get("groups", {}).keys())
    filt = [comparison_dict["filtered"]["groups"][c]["overall_accuracy"] for c in conds]
    raw = [comparison_dict["unfiltered"]["groups"][c]["overall_accuracy"] for c in conds]
    x = np.arange(len(conds))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6.2, 3.2))
    ax.bar(x - width / 2, raw, width, label="unfiltered")
    ax.bar(x + width / 2, filt, width, label="filtered")
    ax.set_xticks(x, conds)
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("target low-pass ablation by head movement")
    ax.legend()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
