"""Figure rendering for solver reports.

All functions write PNG files and return the path; nothing is shown
interactively (the Agg backend is forced so this works headless).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .extraction import ExtractedSet
from .grid import ScalarField, TerminalSet


def _extent(grid):
    ox, oy = grid.origin
    return (ox, ox + (grid.nx - 1) * grid.h, oy, oy + (grid.ny - 1) * grid.h)


def _draw_terminals(ax, terminals: TerminalSet | None):
    if terminals is None:
        return
    pts = terminals.points
    others = [k for k in range(terminals.n) if k != terminals.source_index]
    ax.plot(pts[others, 0], pts[others, 1], "o", color="crimson", ms=6, mec="white", mew=0.8, zorder=5)
    s = terminals.source_index
    ax.plot(pts[s, 0], pts[s, 1], "s", color="crimson", ms=7, mec="white", mew=0.8, zorder=5)


def save_field_figure(
    path: str,
    field: ScalarField,
    terminals: TerminalSet | None = None,
    title: str = "",
    cmap: str = "viridis",
) -> str:
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    im = ax.imshow(field.values, origin="lower", extent=_extent(field.grid), cmap=cmap, interpolation="nearest")
    fig.colorbar(im, ax=ax, fraction=0.046)
    _draw_terminals(ax, terminals)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def save_extraction_figure(
    path: str,
    extracted: ExtractedSet,
    terminals: TerminalSet | None = None,
    geodesics: list[np.ndarray] | None = None,
    title: str = "extracted network",
) -> str:
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    img = np.where(extracted.mask, 1.0, 0.0)
    ax.imshow(img, origin="lower", extent=_extent(extracted.grid), cmap="Greys", vmin=0, vmax=1.6,
              interpolation="nearest")
    if geodesics:
        for poly in geodesics:
            ax.plot(poly[:, 0], poly[:, 1], "-", color="tab:blue", lw=1.2, alpha=0.9)
    _draw_terminals(ax, terminals)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def save_energy_history_figure(path: str, stages) -> str:
    """Stage-by-stage energy breakdown; ``stages`` is a list of StageReport."""
    eps = [s.eps for s in stages]
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.plot(eps, [s.energy for s in stages], "o-", label="total")
    ax.plot(eps, [s.well for s in stages], "s--", ms=4, label="well term")
    ax.plot(eps, [s.dirichlet for s in stages], "d--", ms=4, label="gradient term")
    ax.plot(eps, [s.connectivity for s in stages], "^--", ms=4,
            label="weighted connectivity")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("stage eps (decreasing)")
    ax.set_ylabel("energy")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path
