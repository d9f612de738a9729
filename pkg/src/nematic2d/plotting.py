"""PNG output for runs (non-interactive Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .integrator import State  # noqa: E402


def plot_energy(rows: Sequence[dict], path: str | Path) -> None:
    """Energy components and local energy sup against time."""
    t = np.array([float(r["t"]) for r in rows])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("E", "kinetic", "elastic", "anisotropic"):
        ax1.plot(t, [float(r[key]) for r in rows], label=key)
    ax1.set_xlabel("t")
    ax1.set_ylabel("energy")
    ax1.legend()
    er = np.array([float(r["ER_sup"]) for r in rows])
    if np.any(np.isfinite(er)):
        ax2.plot(t, er, color="tab:red")
    ax2.set_xlabel("t")
    ax2.set_ylabel("sup local energy")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_fields(s: State, path: str | Path) -> None:
    """Heatmaps of |v| and d_3."""
    extent = (0, s.grid.L, 0, s.grid.L)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, data, title in (
        (axes[0], np.sqrt(np.sum(s.v**2, axis=0)), "|v|"),
        (axes[1], s.d[2], "d3"),
    ):
        im = ax.imshow(data, origin="lower", extent=extent, cmap="viridis")
        ax.set_title(f"{title}, t = {s.t:.4g}")
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
