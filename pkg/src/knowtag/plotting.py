"""Figures written next to evaluation reports."""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .corpus import EvaluationReport  # noqa: E402

_METRICS = (("accuracy", "Accuracy"), ("precision", "Precision"), ("recall", "Recall"), ("f1", "F1-score"))

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "knowtag",
}


def plot_confusion(report: EvaluationReport, path: str | os.PathLike) -> Path:
    """2x2 confusion matrix of the overall counts."""
    c = report.overall.counts
    grid = np.array([[c.tp, c.fn], [c.fp, c.tn]])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.2, 3.0))
        ax.imshow(grid, cmap="Blues")
        for (i, j), value in np.ndenumerate(grid):
            ax.text(j, i, str(value), ha="center", va="center",
                    color="white" if value > grid.max() / 2 else "black")
        ax.set_xticks([0, 1], labels=["tagged", "not tagged"])
        ax.set_yticks([0, 1], labels=["match", "no match"])
        ax.set_xlabel("prediction")
        ax.set_ylabel("gold label")
        ax.set_title("Overall confusion counts")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return Path(path)


def plot_concept_metrics(report: EvaluationReport, path: str | os.PathLike) -> Path:
    """Grouped bars of the four metrics per concept, overall last. Undefined metrics are left blank."""
    rows = report.rows()
    labels = [r.scope for r in rows]
    x = np.arange(len(rows))
    width = 0.2
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(rows) + 2), 3.4))
        for k, (attr, title) in enumerate(_METRICS):
            values = [getattr(r, attr) for r in rows]
            heights = [np.nan if v is None else v for v in values]
            ax.bar(x + (k - 1.5) * width, heights, width, label=title)
        ax.set_xticks(x, labels=labels, rotation=60, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("score")
        ax.legend(ncol=4, loc="upper center", bbox_to_anchor=(0.5, 1.18), frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return Path(path)


def render_figures(report: EvaluationReport, directory: str | os.PathLike, stem: str = "report") -> list[Path]:
    """Write ``<stem>_confusion.png`` and ``<stem>_concept_metrics.png`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    return [plot_confusion(report, out / f"{stem}_confusion.png"),
            plot_concept_metrics(report, out / f"{stem}_concept_metrics.png")]
