"""Figures rendered next to the CSV outputs of a run."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from formctl.cbt import BLOCKS  # noqa: E402
from formctl.sim import ConvergenceReport, SimResult  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}

GROUP_COLORS = ("tab:red", "tab:green", "tab:blue", "tab:orange", "tab:purple", "tab:brown")


def plot_paths(result: SimResult, ax=None):
    """Robot paths in the plane, coloured by group, with start and end poses."""
    if ax is None:
        _, ax = plt.subplots(figsize=(6.5, 4.0))
    groups = result.transform.partition.group_of()
    P = result.positions
    for i in range(P.shape[1]):
        color = GROUP_COLORS[groups[i] % len(GROUP_COLORS)]
        ax.plot(P[:, i, 0], P[:, i, 1], color=color, lw=0.8)
        ax.plot(*P[0, i], "o", color=color, ms=3, mfc="none")
        ax.plot(*P[-1, i], ">", color=color, ms=4)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    return ax


def plot_shape_errors(result: SimResult, report: ConvergenceReport | None = None):
    fig, axes = plt.subplots(3, 1, figsize=(6.5, 6.0), sharex=True)
    tr = result.transform
    for ax, (k, block) in zip(axes, enumerate(BLOCKS)):
        rows = tr.block(block)
        Z = result.Z[:, rows].reshape(len(result), -1)
        for j in range(Z.shape[1]):
            ax.plot(result.t, Z[:, j], lw=0.7)
        ax.set_ylabel(f"{block} Z")
        twin = ax.twinx()
        twin.semilogy(result.t, np.maximum(result.error_norms[:, k], 1e-12), "k--", lw=0.8)
        twin.set_ylabel("|error|")
        twin.grid(False)
        if report is not None and report.reach_times[block] is not None:
            ax.axvline(report.reach_times[block], color="k", lw=0.6, ls=":")
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    return fig


def plot_min_distance(result: SimResult):
    fig, ax = plt.subplots(figsize=(6.5, 2.6))
    ax.plot(result.t, result.min_distance, lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("min pairwise distance [m]")
    fig.tight_layout()
    return fig


def render_figures(
    result: SimResult, report: ConvergenceReport, out_dir: str | Path
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.5, 4.0))
        plot_paths(result, ax)
        fig.tight_layout()
        figures = {
            "paths.png": fig,
            "shape.png": plot_shape_errors(result, report),
            "mindist.png": plot_min_distance(result),
        }
        for name, f in figures.items():
            path = out / name
            f.savefig(path)
            plt.close(f)
            paths.append(path)
    return paths
