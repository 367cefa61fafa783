"""Optional PNG figures rendered next to the CSV outputs.

matplotlib is imported lazily; the CSV files are the primary artifacts and
do not depend on it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["plot_rejection_rates", "plot_log_pvalues", "plot_indicator"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_rejection_rates(frame, path, nominal=0.05):
    """Rejection rate against quantile level, one line per regime and beta."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for (stat, hyp, regime, beta), g in frame.groupby(["stat", "hypothesis", "regime", "beta"], sort=False):
        g = g.sort_values("tau")
        ax.plot(g["tau"], g["reject_pct"], marker="o", label=f"{stat} {hyp} {regime} b={beta:g}")
    ax.axhline(100 * nominal, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("tau")
    ax.set_ylabel("rejection (%)")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)


def plot_log_pvalues(frame, path, threshold=0.01):
    """``ln max(0.001, p)`` against quantile level, one line per predictor."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, g in frame.groupby("predictor", sort=False):
        ax.plot(g["tau"], g["log_p"], label=name)
    ax.axhline(np.log(threshold), color="grey", lw=0.8, ls="--")
    ax.set_xlabel("tau")
    ax.set_ylabel("ln max(0.001, p)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)


def plot_indicator(frame, path):
    """Left and right tail indicators over the forecast periods."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    x = np.arange(len(frame))
    ax.plot(x, frame["indicator_left"], label="left")
    ax.plot(x, frame["indicator_right"], label="right")
    step = max(1, len(frame) // 8)
    ax.set_xticks(x[::step], frame["period"].iloc[::step], rotation=30, fontsize=7)
    ax.legend()
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)
