"""Render training and evaluation figures to image files.

Every report path that writes delimited text can also drop a figure next to
it; these helpers keep all matplotlib usage in one place and force the Agg
backend so they work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluate import EvalReport


def save_training_curves(epochs, losses, dev_f1, path) -> None:
    """Plot mean training loss and dev F1 per epoch on twin axes."""
    fig, ax_loss = plt.subplots(figsize=(7, 4))
    ax_loss.plot(epochs, losses, color="tab:red", marker="o", label="train loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean batch loss", color="tab:red")
    ax_loss.tick_params(axis="y", labelcolor="tab:red")

    ax_f1 = ax_loss.twinx()
    ax_f1.plot(epochs, dev_f1, color="tab:blue", marker="s", label="dev F1")
    ax_f1.set_ylabel("dev F1", color="tab:blue")
    ax_f1.set_ylim(-0.05, 1.05)
    ax_f1.tick_params(axis="y", labelcolor="tab:blue")

    ax_loss.set_title("training progress")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_prf_bar(report: EvalReport, path, title: str = "entity-level scores") -> None:
    """Bar chart of precision / recall / F1 for one evaluation report."""
    fig, ax = plt.subplots(figsize=(5, 4))
    names = ["precision", "recall", "F1"]
    values = [report.precision, report.recall, report.f1]
    bars = ax.bar(names, values, color=["tab:blue", "tab:orange", "tab:green"])
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, value + 0.02,
                f"{value:.4f}", ha="center", va="bottom", fontsize=9)
    ax.set_ylim(0.0, 1.1)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_f1(rows, path) -> None:
    """Horizontal bars of F1 per ablation row.

    ``rows`` holds ``(flags, report)`` pairs as consumed by
    :func:`disner.evaluate.ablation_report`.
    """
    labels = []
    values = []
    for flags, report in rows:
        on = [name for name, enabled in sorted(flags.items()) if enabled]
        labels.append("+".join(on) if on else "none")
        values.append(report.f1)
    fig, ax = plt.subplots(figsize=(7, 0.6 * max(len(rows), 2) + 1.5))
    positions = range(len(labels))
    ax.barh(positions, values, color="tab:purple")
    ax.set_yticks(list(positions))
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_xlim(0.0, 1.05)
    ax.set_xlabel("F1")
    ax.set_title("ablation comparison")
    for pos, value in zip(positions, values):
        ax.text(value + 0.01, pos, f"{value:.4f}", va="center", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
