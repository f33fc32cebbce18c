"""Figure rendering for the CLI report paths (written next to the CSVs)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .fusion import GridSearchResult


def _alpha_label(alpha: float) -> str:
    inv = 1.0 / alpha
    return f"1/{inv:,.0f}"


def save_heatmaps(result: GridSearchResult, out_dir: str | Path) -> list[Path]:
    """One heat map per metric (TPR, FPR, TPR-FPR) over the search grid."""
    out_dir = Path(out_dir)
    alphas = sorted({cell.alpha for cell in result.cells})
    cs = sorted({cell.c for cell in result.cells})
    by_key = {(cell.alpha, cell.c): cell for cell in result.cells}
    written = []
    for name, title, getter in (
        ("tpr_heatmap.png", "True positive rate", lambda cell: cell.tpr),
        ("fpr_heatmap.png", "False positive rate", lambda cell: cell.fpr),
        ("ks_heatmap.png", "TPR - FPR", lambda cell: cell.ks),
    ):
        grid = np.array([[getter(by_key[(a, c)]) for c in cs] for a in alphas])
        fig, ax = plt.subplots(figsize=(7, 4.5))
        im = ax.imshow(grid, aspect="auto", origin="lower", cmap="RdYlGn")
        ax.set_xticks(range(len(cs)), [f"{c:.2f}" for c in cs])
        ax.set_yticks(range(len(alphas)), [_alpha_label(a) for a in alphas])
        ax.set_xlabel("confidence threshold C")
        ax.set_ylabel("sigmoid gain alpha")
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        path = out_dir / name
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def save_score_curve(
    curve: Sequence[tuple[int, float, float]], path: str | Path
) -> Path:
    ks = [row[0] for row in curve]
    train = [row[1] for row in curve]
    test = [row[2] for row in curve]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(ks, train, marker="o", label="train")
    ax.plot(ks, test, marker="s", label="test")
    ax.set_xlabel("number of top-ranked features")
    ax.set_ylabel("score (0-1000)")
    ax.set_title("Classifier score vs. feature count")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_metrics_bars(metrics: dict[str, dict[str, float]], path: str | Path) -> Path:
    """Grouped TPR/FPR/FNR bars, one group per evaluation band."""
    bands = list(metrics.keys())
    names = ["tpr", "fpr", "fnr"]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    width = 0.25
    xs = np.arange(len(bands))
    for i, name in enumerate(names):
        values = [metrics[band].get(name, float("nan")) for band in bands]
        ax.bar(xs + (i - 1) * width, values, width, label=name.upper())
    ax.set_xticks(xs, bands)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("rate")
    ax.set_title("Detection rates")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_mapper_scatter(
    predictions: Sequence[tuple[float, float]],
    truths: Sequence[tuple[float, float]],
    path: str | Path,
) -> Path:
    pred = np.asarray(predictions, dtype=float)
    true = np.asarray(truths, dtype=float)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, col, label, unit in ((axes[0], 0, "distance", "m"), (axes[1], 1, "angle", "deg")):
        ax.scatter(true[:, col], pred[:, col], s=8, alpha=0.5)
        lo = min(true[:, col].min(), pred[:, col].min())
        hi = max(true[:, col].max(), pred[:, col].max())
        ax.plot([lo, hi], [lo, hi], "k--", linewidth=1)
        ax.set_xlabel(f"true {label} ({unit})")
        ax.set_ylabel(f"predicted {label} ({unit})")
        ax.set_title(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
