"""Uniform 2-D grids, nodal scalar fields, and terminal sets.

Conventions used throughout the package:

* A grid has ``nx * ny`` nodes with uniform spacing ``h`` on both axes.
  Node ``(i, j)`` sits at ``origin + (i*h, j*h)``; ``i`` runs along x,
  ``j`` along y.
* Field values are stored in a ``(ny, nx)`` array, ``values[j, i]``; the
  flat (row-major) index of node ``(i, j)`` is ``j*nx + i``.
* Quadrature is the 2-D trapezoid rule (boundary weights halved), which is
  exact for bilinear node data.
* Nodal gradients use central differences in the interior and one-sided
  differences on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular grid of ``nx * ny`` nodes with spacing ``h``."""

    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid must have at least 3 nodes per axis, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise ValueError(f"grid spacing must be positive, got h={self.h}")

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape of a nodal field: (ny, nx)."""
        return (self.ny, self.nx)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def extent(self) -> tuple[float, float]:
        """Side lengths (Lx, Ly) of the covered rectangle."""
        return ((self.nx - 1) * self.h, (self.ny - 1) * self.h)

    @property
    def diameter(self) -> float:
        lx, ly = self.extent
        return float(np.hypot(lx, ly))

    def node_position(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + i * self.h, self.origin[1] + j * self.h)

    def flat_index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def xs(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.nx)

    def ys(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays X, Y of shape (ny, nx)."""
        return np.meshgrid(self.xs(), self.ys())

    def contains(self, p) -> bool:
        x, y = float(p[0]), float(p[1])
        lx, ly = self.extent
        ox, oy = self.origin
        return ox <= x <= ox + lx and oy <= y <= oy + ly


@dataclass
class ScalarField:
    """One real value per grid node, stored as a (ny, nx) float array."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )

    @classmethod
    def full(cls, grid: Grid2D, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "ScalarField":
        X, Y = grid.meshgrid()
        return cls(grid, np.asarray(fn(X, Y), dtype=np.float64))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class TerminalSet:
    """Terminal points x_1..x_N.  The source (x_1 by default) anchors all
    geodesic distances."""

    points: np.ndarray
    source_index: int = 0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError(f"terminal points must be an (N, 2) array, got {self.points.shape}")
        n = len(self.points)
        if n < 2:
            raise ValueError(f"need at least 2 terminals, got {n}")
        if not 0 <= self.source_index < n:
            raise ValueError(f"source index {self.source_index} out of range for {n} terminals")
        d = self.points[:, None, :] - self.points[None, :, :]
        dist = np.hypot(d[..., 0], d[..., 1])
        np.fill_diagonal(dist, np.inf)
        k, l = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[k, l] == 0.0:
            raise ValueError(f"terminals {k} and {l} coincide at {tuple(self.points[k])}")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def source(self) -> np.ndarray:
        return self.points[self.source_index]

    def others(self) -> np.ndarray:
        """Indices of the non-source terminals, in order."""
        return np.array([k for k in range(self.n) if k != self.source_index], dtype=np.int64)


def snap_to_grid(grid: Grid2D, p) -> tuple[int, int]:
    """Nearest node (i, j) to point p; p must lie inside the grid rectangle."""
    x, y = float(p[0]), float(p[1])
    ox, oy = grid.origin
    lx, ly = grid.extent
    if not ox <= x <= ox + lx:
        raise ValueError(f"point x={x} outside grid range [{ox}, {ox + lx}]")
    if not oy <= y <= oy + ly:
        raise ValueError(f"point y={y} outside grid range [{oy}, {oy + ly}]")
    i = int(np.floor((x - ox) / grid.h + 0.5))
    j = int(np.floor((y - oy) / grid.h + 0.5))
    return (min(i, grid.nx - 1), min(j, grid.ny - 1))


def snap_terminals(grid: Grid2D, terminals: TerminalSet):
    """Snap every terminal to its nearest node.

    Returns (nodes, displacements): a list of (i, j) pairs and the Euclidean
    snap distance of each terminal.  Distinct terminals must land on distinct
    nodes.
    """
    nodes = []
    disp = np.empty(terminals.n)
    for k, p in enumerate(terminals.points):
        ij = snap_to_grid(grid, p)
        nodes.append(ij)
        disp[k] = float(np.hypot(*(np.asarray(grid.node_position(*ij)) - p)))
    if len(set(nodes)) != len(nodes):
        raise ValueError("two terminals snap to the same grid node; refine the grid")
    return nodes, disp


def boundary_mask(grid: Grid2D) -> np.ndarray:
    """Boolean (ny, nx) mask of the outermost node ring."""
    m = np.zeros(grid.shape, dtype=bool)
    m[0, :] = m[-1, :] = True
    m[:, 0] = m[:, -1] = True
    return m


def trapezoid_weights(grid: Grid2D) -> np.ndarray:
    """Nodal quadrature weights of the 2-D trapezoid rule (shape (ny, nx))."""
    wx = np.ones(grid.nx)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(grid.ny)
    wy[0] = wy[-1] = 0.5
    return grid.h * grid.h * np.outer(wy, wx)


def integrate(f: ScalarField) -> float:
    """Trapezoid-rule integral of f over the grid rectangle."""
    return float(np.sum(trapezoid_weights(f.grid) * f.values))


def diff_x(values: np.ndarray, h: float) -> np.ndarray:
    """d/dx by central differences (one-sided on the left/right columns)."""
    g = np.empty_like(values)
    g[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / (2.0 * h)
    g[:, 0] = (values[:, 1] - values[:, 0]) / h
    g[:, -1] = (values[:, -1] - values[:, -2]) / h
    return g


def diff_y(values: np.ndarray, h: float) -> np.ndarray:
    """d/dy by central differences (one-sided on the bottom/top rows)."""
    g = np.empty_like(values)
    g[1:-1, :] = (values[2:, :] - values[:-2, :]) / (2.0 * h)
    g[0, :] = (values[1, :] - values[0, :]) / h
    g[-1, :] = (values[-1, :] - values[-2, :]) / h
    return g


def diff_x_transpose(a: np.ndarray, h: float) -> np.ndarray:
    """Exact transpose of diff_x as a linear map on nodal arrays."""
    out = np.zeros_like(a)
    # interior stencil (a[:,i] feeds nodes i-1 and i+1)
    out[:, 2:] += a[:, 1:-1] / (2.0 * h)
    out[:, :-2] -= a[:, 1:-1] / (2.0 * h)
    # one-sided boundary stencils
    out[:, 0] -= a[:, 0] / h
    out[:, 1] += a[:, 0] / h
    out[:, -1] += a[:, -1] / h
    out[:, -2] -= a[:, -1] / h
    return out


def diff_y_transpose(a: np.ndarray, h: float) -> np.ndarray:
    """Exact transpose of diff_y as a linear map on nodal arrays."""
    out = np.zeros_like(a)
    out[2:, :] += a[1:-1, :] / (2.0 * h)
    out[:-2, :] -= a[1:-1, :] / (2.0 * h)
    out[0, :] -= a[0, :] / h
    out[1, :] += a[0, :] / h
    out[-1, :] += a[-1, :] / h
    out[-2, :] -= a[-1, :] / h
    return out


def gradient_sq(f: ScalarField) -> ScalarField:
    """Per-node squared gradient magnitude |grad f|^2."""
    gx = diff_x(f.values, f.grid.h)
    gy = diff_y(f.values, f.grid.h)
    return ScalarField(f.grid, gx * gx + gy * gy)
