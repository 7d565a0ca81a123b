"""Report figures (matplotlib, file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CHANNEL_COLORS = ("tab:red", "tab:green", "tab:blue")


def _save(fig, path) -> str:
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return str(path)


def plot_stats(stats, path) -> str:
    """Channel means (with std bars) and grade histograms per domain."""
    fig, (ax_rgb, ax_hist) = plt.subplots(1, 2, figsize=(10, 4))
    names = [s.domain for s in stats]
    x = np.arange(len(names))
    width = 0.25
    for c, color in enumerate(CHANNEL_COLORS):
        ax_rgb.bar(x + (c - 1) * width, [s.mean[c] for s in stats], width,
                   yerr=[s.std[c] for s in stats], color=color, capsize=2, label="RGB"[c])
    ax_rgb.set_xticks(x, names)
    ax_rgb.set_ylabel("FOV pixel value")
    ax_rgb.set_title("Colour statistics")
    ax_rgb.legend()

    n_classes = len(stats[0].histogram) if stats else 0
    width = 0.8 / max(len(stats), 1)
    grades = np.arange(n_classes)
    for k, s in enumerate(stats):
        ax_hist.bar(grades + (k - (len(stats) - 1) / 2) * width, s.histogram, width, label=s.domain)
    ax_hist.set_xticks(grades)
    ax_hist.set_xlabel("grade")
    ax_hist.set_ylabel("images")
    ax_hist.set_title("Grade histogram")
    ax_hist.legend()
    return _save(fig, path)


def plot_reports(reports, path, metric: str = "auc") -> str:
    """Grouped bars: one group per run label plus the average, one bar per method."""
    labels = [r.label for r in reports[0].runs] + ["Average"]
    x = np.arange(len(labels))
    width = 0.8 / len(reports)
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(labels)), 4))
    for k, rep in enumerate(reports):
        vals = [getattr(r, metric) for r in rep.runs] + [rep.average[metric]]
        ax.bar(x + (k - (len(reports) - 1) / 2) * width, vals, width, label=rep.method)
    ax.set_xticks(x, labels)
    ax.set_ylabel(f"{metric.upper()} (%)")
    ax.set_title(f"{reports[0].protocol}: {'target' if reports[0].protocol == 'DG' else 'source'} domain")
    ax.legend()
    return _save(fig, path)


def plot_history(history, path) -> str:
    epochs = [row["epoch"] for row in history.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [row["loss"] for row in history.epochs], label="total")
    ax.plot(epochs, [row["sup"] for row in history.epochs], label="cross-entropy")
    if any(row["scon"] for row in history.epochs):
        ax.plot(epochs, [row["scon"] for row in history.epochs], label="contrastive")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    twin = ax.twinx()
    twin.plot(epochs, [row["alpha"] for row in history.epochs], "k--", lw=1, label="alpha")
    twin.set_ylabel("alpha")
    twin.set_ylim(-0.05, 1.05)
    ax.legend(loc="upper right")
    return _save(fig, path)
