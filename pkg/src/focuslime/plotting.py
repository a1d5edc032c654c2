"""Static figures written next to the CSV/JSON reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)


def plot_aopc_curves(curves: dict[str, np.ndarray], path) -> None:
    """AOPC_k against k, one line per method."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for label, values in curves.items():
            ks = np.arange(1, len(values) + 1)
            ax.plot(ks, values, label=f"{label} (mean {np.mean(values):.3f})")
        ax.axhline(0, color="0.7", lw=0.8)
        ax.set_xlabel("features deleted, k")
        ax.set_ylabel(r"AOPC$_k$")
        ax.legend()
        _save(fig, path)


def plot_recall(means: dict[str, list[float]], ratios, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        width = 0.8 / max(len(means), 1)
        x = np.arange(len(ratios))
        for i, (label, vals) in enumerate(means.items()):
            ax.bar(x + i * width, vals, width, label=label)
        ax.set_xticks(x + width * (len(means) - 1) / 2)
        ax.set_xticklabels([f"{r:.0%}" for r in ratios])
        ax.set_xlabel("retrieved words / evidence words")
        ax.set_ylabel("recall")
        ax.set_ylim(0, 1.05)
        ax.legend()
        _save(fig, path)


def plot_narrowing(paths: dict[str, list[tuple[int, float, bool]]], path) -> None:
    """Fidelity along each greedy narrowing path; the optimal neighbourhood is starred."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for label, rows in paths.items():
            n_active = [r[0] for r in rows]
            fid = [r[1] for r in rows]
            line, = ax.plot(n_active, fid, marker=".", label=label)
            for n, f, opt in rows:
                if opt:
                    ax.plot([n], [f], marker="*", ms=10, color=line.get_color())
        ax.invert_xaxis()
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        ax.set_xlabel("active features")
        ax.set_ylabel("mean AOPC")
        if len(paths) <= 10:
            ax.legend()
        _save(fig, path)
