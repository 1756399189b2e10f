"""Figures written next to the CSV reports."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_history(history, path):
    epochs = [r["epoch"] for r in history]
    fig, (ax_loss, ax_hard) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [r["loss"] for r in history], color="k", marker=".")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training NLL")

    ax_hard.plot(epochs, [r["hardness"] for r in history], label="Sinkhorn hardness", marker=".")
    ax_hard.plot(epochs, [r["L_sparsity"] for r in history], label="L sparsity", marker=".")
    ax_hard.set_ylim(0, 1.05)
    ax_hard.set_xlabel("epoch")
    ax_hard.legend(frameon=False)

    # temperature on a twin axis shows where the schedule steps
    ax_temp = ax_hard.twinx()
    ax_temp.step(epochs, [r["temperature"] for r in history], where="post", color="0.6", ls="--")
    ax_temp.set_ylabel("temperature", color="0.4")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_kappa_sweep(rows, path):
    kappa = [r["kappa"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(kappa, [r["f1"] for r in rows], color="k", marker="o", ms=3, label="F1")
    ax.plot(kappa, [r["precision"] for r in rows], ls="--", label="precision")
    ax.plot(kappa, [r["recall"] for r in rows], ls=":", label="recall")
    ax.set_xlabel(r"cutoff $\kappa$")
    ax.set_ylabel("score")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_structure(M, L, adjacency, labels, path):
    """Soft mask, ordered structure matrix and the extracted graph, side by side."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4.2))
    panels = [(M, "mask M = P L P^T"), (L, "structure L (causal order)"), (adjacency, "extracted adjacency")]
    ticks = np.arange(len(labels))
    for ax, (mat, title) in zip(axes, panels):
        im = ax.imshow(np.asarray(mat, dtype=float), vmin=0, vmax=1, cmap="viridis")
        ax.set_title(title)
        if len(labels) <= 30:
            ax.set_xticks(ticks)
            ax.set_yticks(ticks)
            if title != panels[1][1]:
                ax.set_xticklabels(labels, fontsize=7, rotation=90)
                ax.set_yticklabels(labels, fontsize=7)
    fig.colorbar(im, ax=axes, shrink=0.8)
    fig.savefig(path, dpi=120)
    plt.close(fig)
