"""Matplotlib figures rendered next to the delimited outputs.

Kept separate from the computation modules: everything here takes already
computed rows/results and only draws.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_sensitivity_sweep(rows: list[dict], knob: str, out_path) -> None:
    """Bias (and the drivers present in the rows) against the sweep knob."""
    x = np.array([row[knob] for row in rows], dtype=float)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    ax = axes[0]
    ax.plot(x, [row["bias"] for row in rows], "o-", color="firebrick")
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel(knob.replace("_", " "))
    ax.set_ylabel("bias of the ratio estimand")
    ax.set_title("bias")
    ax = axes[1]
    drawn = False
    for key in ("lambda", "odds_noncompliance", "mean_direct_effect_noncompliers"):
        if key in rows[0]:
            ax.plot(x, [row[key] for row in rows], "s-", label=key.replace("_", " "))
            drawn = True
    if "biased_estimand" in rows[0]:
        ax.plot(x, [row["biased_estimand"] for row in rows], "o--", label="estimand")
        ax.plot(x, [row["true_late"] for row in rows], ":", label="target effect")
        drawn = True
    if drawn:
        ax.legend(fontsize=8)
    ax.set_xlabel(knob.replace("_", " "))
    ax.set_title("drivers")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_verification(results, out_path) -> None:
    """Horizontal bars of max absolute error per check, log scale."""
    labels = [r.check_id for r in results]
    errors = [max(r.max_error, 1e-18) if r.max_error is not None else 1.0 for r in results]
    colors = ["seagreen" if r.passed else "firebrick" for r in results]
    fig, ax = plt.subplots(figsize=(8, 0.35 * len(results) + 1.2))
    ypos = np.arange(len(results))
    ax.barh(ypos, errors, color=colors)
    ax.set_yticks(ypos)
    ax.set_yticklabels(labels, fontsize=7)
    ax.set_xscale("log")
    ax.set_xlabel("max |error|")
    ax.invert_yaxis()
    ax.set_title("identification equality checks")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_bootstrap(points, point: float, out_path, title: str = "bootstrap replicates") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(np.asarray(points, dtype=float), bins=40, color="steelblue", alpha=0.85)
    ax.axvline(point, color="firebrick", lw=1.5, label="point estimate")
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
