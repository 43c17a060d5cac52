"""Matplotlib renderings of the report tables.

Every function writes a PNG next to the delimited output and returns the
path. Rendering is deterministic (fixed size, dpi, and ordering) so repeated
runs with one seed produce byte-identical files.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .interaction import InteractionNetwork
from .metrics import ConfusionMatrix
from .selection import UsageSummary

_DPI = 150


def _save(fig, path) -> str:
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def class_histogram(counts: dict, path) -> str:
    """Bar chart of samples per class."""
    labels = sorted(counts)
    values = [counts[lab] for lab in labels]
    fig, ax = plt.subplots(figsize=(5, 4))
    positions = range(len(labels))
    ax.bar(positions, values, color="steelblue")
    ax.set_xticks(positions, [str(lab) for lab in labels])
    for x, v in enumerate(values):
        ax.text(x, v, str(v), ha="center", va="bottom", fontsize=9)
    ax.set_xlabel("class")
    ax.set_ylabel("samples")
    ax.set_title("Class distribution")
    return _save(fig, path)


def mean_spectra(X: np.ndarray, y: np.ndarray, columns: list[str], path) -> str:
    """Per-class mean trace across the predictor axis."""
    fig, ax = plt.subplots(figsize=(7, 4))
    try:
        xs = np.array([float(c.lstrip("X")) for c in columns])
    except ValueError:
        xs = np.arange(len(columns), dtype=float)
    for lab in sorted(set(np.asarray(y).tolist())):
        ax.plot(xs, X[np.asarray(y) == lab].mean(axis=0), label=f"class {lab}")
    ax.set_xlabel("wavelength")
    ax.set_ylabel("mean value")
    ax.legend()
    ax.set_title("Per-class mean spectrum")
    return _save(fig, path)


def pca_variance(explained: np.ndarray, path, max_components: int = 20) -> str:
    """Per-component and cumulative explained-variance percentages."""
    frac = np.asarray(explained)[:max_components]
    xs = np.arange(1, frac.size + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(xs, 100 * frac, color="steelblue", label="component")
    ax.plot(xs, 100 * np.cumsum(frac), "o-", color="darkorange", label="cumulative")
    ax.set_xlabel("principal component")
    ax.set_ylabel("explained variance (%)")
    ax.set_xticks(xs)
    ax.legend()
    return _save(fig, path)


def usage_scatter(summary: UsageSummary, path) -> str:
    """Mean usage proportion per variable with 95% bounds."""
    xs = np.arange(summary.p)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.vlines(xs, summary.lower, summary.upper, color="lightsteelblue", lw=1,
              label="95% interval")
    ax.plot(xs, summary.mean, ".", color="crimson", ms=4, label="mean proportion")
    ax.set_xlabel("variable index")
    ax.set_ylabel("usage proportion")
    ax.legend()
    return _save(fig, path)


def confusion_heatmap(cm: ConfusionMatrix, path) -> str:
    """Counts heatmap, rows actual, columns predicted."""
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(cm.counts, cmap="Blues")
    ticks = np.arange(len(cm.labels))
    ax.set_xticks(ticks, [str(lab) for lab in cm.labels])
    ax.set_yticks(ticks, [str(lab) for lab in cm.labels])
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    vmax = cm.counts.max() if cm.counts.size else 1
    for i in range(len(cm.labels)):
        for j in range(len(cm.labels)):
            color = "white" if cm.counts[i, j] > 0.5 * vmax else "black"
            ax.text(j, i, str(int(cm.counts[i, j])), ha="center", va="center",
                    color=color, fontsize=10)
    fig.colorbar(im, ax=ax, shrink=0.85)
    return _save(fig, path)


def network_diagram(net: InteractionNetwork, path) -> str:
    """Circular-layout drawing with edge width proportional to weight."""
    fig, ax = plt.subplots(figsize=(6, 6))
    n = max(net.n_nodes, 1)
    pos = {}
    for i, name in enumerate(net.names):
        angle = 2 * math.pi * i / n
        pos[name] = (math.cos(angle), math.sin(angle))
    max_w = max((w for _, _, w in net.edges), default=1.0)
    for a, b, w in net.edges:
        (xa, ya), (xb, yb) = pos[a], pos[b]
        ax.plot([xa, xb], [ya, yb], color="gray",
                lw=0.5 + 4.5 * (w / max_w if max_w else 0), zorder=1)
        ax.text(0.5 * (xa + xb), 0.5 * (ya + yb), f"{w:.3f}", fontsize=7,
                color="dimgray", ha="center")
    for name, (x, y) in pos.items():
        ax.scatter([x], [y], s=600, color="lightsteelblue", zorder=2,
                   edgecolors="navy")
        ax.text(x, y + 0.14, name, ha="center", fontsize=8)
    ax.set_xlim(-1.4, 1.4)
    ax.set_ylim(-1.4, 1.4)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.set_title(f"Variable interactions (threshold {net.threshold:g})")
    return _save(fig, path)
