"""Convergence figures rendered to image files next to the trace CSVs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def plot_convergence(
    per_seed: Mapping[int, Mapping[str, np.ndarray]],
    aggregate: Mapping[str, np.ndarray],
    path,
    title: str = "",
) -> Path:
    """Two panels over CPU time: objective and gradient norm (log scale).

    ``per_seed`` maps a seed to its trace columns (``cpu_seconds``,
    ``objective``, ``grad_norm``); ``aggregate`` holds the across-seed means
    with the mean ``cpu_seconds`` as time axis.  Individual seeds are drawn
    faintly behind the mean.
    """
    plt = _pyplot()
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), constrained_layout=True)
    panels = (("objective", "objective", "linear"), ("grad_norm", "gradient norm", "log"))
    for ax, (col, label, scale) in zip(axes, panels):
        for cols in per_seed.values():
            ax.plot(cols["cpu_seconds"], cols[col], color="0.75", linewidth=0.8)
        if len(aggregate.get(col, ())):
            ax.plot(aggregate["cpu_seconds"], aggregate[col], color="C0", linewidth=1.6, label="mean")
        if scale == "log":
            vals = np.concatenate([np.asarray(c[col]) for c in per_seed.values()] or [np.ones(1)])
            if (vals > 0).any():
                ax.set_yscale("log")
        ax.set_xlabel("CPU time (s)")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    if title:
        fig.suptitle(title)
    if len(per_seed) > 1:
        axes[0].legend(loc="best", frameon=False)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
