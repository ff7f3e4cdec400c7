"""Trajectory figures for method comparisons (rendered to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "savefig.dpi": 150,
}

COLORS = {"vp": "tab:red", "cantelli": "black", "scenario": "black"}
MARKERS = {"vp": "o", "cantelli": "s", "scenario": "^"}


def _cone(ax, apex_bound, lateral):
    xs = np.array([0.0, apex_bound])
    ax.plot(xs, xs, color="0.6", lw=0.8)
    ax.plot(xs, -xs, color="0.6", lw=0.8)
    ax.plot([apex_bound, apex_bound], [-apex_bound, apex_bound], color="0.6", lw=0.8)
    ax.add_patch(plt.Rectangle((0.0, -lateral), 2.0, 2 * lateral, fill=False, ec="tab:blue", lw=0.8))


def plot_mean_trajectories(trajectories: dict[str, np.ndarray], path, apex_bound: float = 10.0, terminal_halfwidth: float = 0.5, title: str | None = None):
    """Expected positions per method in the x-y and x-z planes.

    ``trajectories`` maps a method label to an ``(N+1, n)`` array of mean
    states whose first three entries are positions.
    """
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7.0, 3.2))
        for ax, dim, label in ((axes[0], 1, "y [km]"), (axes[1], 2, "z [km]")):
            _cone(ax, apex_bound, terminal_halfwidth)
            for method, traj in trajectories.items():
                ax.plot(traj[:, 0], traj[:, dim], marker=MARKERS.get(method, "."), ms=3,
                        color=COLORS.get(method), label=method,
                        ls="-" if method == "vp" else "--")
            ax.set_xlabel("x [km]")
            ax.set_ylabel(label)
            ax.grid(alpha=0.3)
        axes[0].legend(loc="best")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
