"""Matplotlib renderings of the report figures (SVG, deterministic output).

Every figure has a CSV twin written by the CLI so the plots can be
reproduced externally; these renderings are conveniences, not the record.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# fixed hash salt + no embedded date so repeated runs emit identical SVG bytes
matplotlib.rcParams["svg.hashsalt"] = "pkan"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def forecast_band_figure(path, truth, median, lower, upper, threshold, budget, title):
    """Truth vs predictive median/interval with the dynamic threshold band."""
    steps = np.arange(len(truth))
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.fill_between(steps, lower, upper, alpha=0.25, color="tab:blue", label="80% interval")
    ax.plot(steps, median, color="tab:blue", lw=1.2, label="median forecast")
    ax.plot(steps, truth, color="black", lw=1.0, label="observed")
    ax.plot(steps, threshold, color="tab:orange", ls="--", lw=1.2, label="dynamic threshold")
    ax.axhline(budget, color="tab:red", ls="--", lw=1.2, label="static max")
    ax.set_xlabel("hour of test span")
    ax.set_ylabel("PRB demand")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def pareto_figure(path, points):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for p in points:
        marker = "o" if not p.dominated else "x"
        ax.scatter(
            p.savings_frac, p.underprov_frac, marker=marker, s=60,
            color="tab:green" if not p.dominated else "tab:gray",
        )
        ax.annotate(p.label, (p.savings_frac, p.underprov_frac), fontsize=8,
                    xytext=(4, 4), textcoords="offset points")
    ax.set_xlabel("PRB savings fraction")
    ax.set_ylabel("underprovisioning fraction")
    ax.set_title("savings vs underprovisioning (x = dominated)")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def fic_figure(path, labels, levels, values):
    """Grouped bars of empirical central-interval coverage per nominal level."""
    x = np.arange(len(levels))
    width = 0.8 / max(len(labels), 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, label in enumerate(labels):
        ax.bar(x + i * width, values[label], width, label=label)
    ax.plot(x + 0.4 - width / 2, levels, "k--", lw=1, label="nominal")
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([str(l) for l in levels])
    ax.set_xlabel("nominal interval level")
    ax.set_ylabel("empirical coverage")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
