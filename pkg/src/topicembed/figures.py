"""Figure rendering for the CLI report paths.

Every report the CLI writes as delimited text gets a small matplotlib
companion figure next to it. Rendering is headless (Agg) and file-only.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_training_curves(report, path):
    """Loss decomposition and learning-rate schedule, one panel each."""
    epochs = np.arange(report.epochs_run)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(epochs, report.loss, label="loss", lw=1.5)
    ax1.plot(epochs, report.kl, label="kl", lw=1.0, ls="--")
    ax1.plot(epochs, report.recon, label="recon", lw=1.0, ls=":")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean per-instance loss")
    ax1.legend(frameon=False)
    ax2.plot(epochs, report.lr, color="tab:red", lw=1.5)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("learning rate")
    ax2.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_similarity_scatter(results, path):
    """Model cosine vs gold score per benchmark; one panel per benchmark.

    ``results`` is a list of (name, gold_scores, model_scores, rho).
    """
    n = len(results)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), squeeze=False)
    for ax, (name, gold, ours, rho) in zip(axes[0], results):
        ax.scatter(gold, ours, s=8, alpha=0.6)
        ax.set_xlabel("gold score")
        ax.set_ylabel("model cosine")
        ax.set_title(f"{name} (rho={rho:.3f})", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_coherence_bars(topic_scores, mean_score, path):
    fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * len(topic_scores)), 3.2))
    ax.bar(np.arange(len(topic_scores)), topic_scores, color="tab:blue")
    ax.axhline(mean_score, color="tab:red", lw=1.0, ls="--", label=f"mean {mean_score:.3f}")
    ax.set_xlabel("topic")
    ax.set_ylabel("NPMI coherence")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_lexsub_bars(result, path):
    fig, ax = plt.subplots(figsize=(4.0, 3.2))
    ax.bar(["hits", "misses", "skipped"],
           [result.hits, result.evaluated - result.hits, result.skipped],
           color=["tab:green", "tab:orange", "tab:gray"])
    ax.set_ylabel("instances")
    ax.set_title(f"accuracy {result.accuracy:.3f}", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
