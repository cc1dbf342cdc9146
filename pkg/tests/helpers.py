"""Shared test utilities: reference shortest paths and random admissible fields."""

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from steinerpf.grid import Grid2D, ScalarField, boundary_mask


def dijkstra_reference(phi: ScalarField, source: tuple[int, int]) -> np.ndarray:
    """Shortest-path distances on the 4-neighbor grid graph.

    Edge weight into a node is h * phi(head), matching the one-sided
    update of the marcher, so the marched field u obeys

        dij / sqrt(2)  <=  u  <=  dij

    nodewise (the lower bound because a two-sided update can undercut a
    single axis by at most that factor).
    """
    g = phi.grid
    h = g.h
    n = g.n_nodes
    vals = phi.values.ravel()
    rows, cols, w = [], [], []
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        jj, ii = np.meshgrid(np.arange(g.ny), np.arange(g.nx), indexing="ij")
        jj2, ii2 = jj + dj, ii + di
        ok = (ii2 >= 0) & (ii2 < g.nx) & (jj2 >= 0) & (jj2 < g.ny)
        a = (jj[ok] * g.nx + ii[ok]).ravel()
        b = (jj2[ok] * g.nx + ii2[ok]).ravel()
        rows.append(a)
        cols.append(b)
        w.append(h * vals[b])  # cost of arriving at b
    mat = coo_matrix(
        (np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    src = source[1] * g.nx + source[0]
    d = dijkstra(mat.tocsr(), directed=True, indices=src)
    return d.reshape(g.shape)


def random_admissible(grid: Grid2D, eps: float, rng, lo=None, hi=0.95) -> ScalarField:
    """Smooth random field with values in [lo, hi] inside and 1 on the
    boundary ring.  lo defaults to eps + 0.05 so central-difference bumps
    stay admissible."""
    if lo is None:
        lo = eps + 0.05
    raw = gaussian_filter(rng.standard_normal(grid.shape), sigma=2.0)
    raw = (raw - raw.min()) / max(raw.max() - raw.min(), 1e-15)
    v = lo + (hi - lo) * raw
    v[boundary_mask(grid)] = 1.0
    return ScalarField(grid, v)


def random_bump(grid: Grid2D, rng, pad: int = 2) -> np.ndarray:
    """Smooth perturbation supported away from the boundary (zero on the
    outer ``pad`` rings), unit sup norm."""
    b = gaussian_filter(rng.standard_normal(grid.shape), sigma=1.5)
    m = np.zeros(grid.shape)
    m[pad:-pad, pad:-pad] = 1.0
    b *= m
    s = np.max(np.abs(b))
    return b / s if s > 0 else b


def central_difference(f, t: float):
    """(f(t) - f(-t)) / 2t for a scalar function of one variable."""
    return (f(t) - f(-t)) / (2.0 * t)
