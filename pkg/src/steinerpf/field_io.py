"""Serialization of fields, cell sets, and polylines.

Field CSV layout: a header line ``nx,ny,h,origin_x,origin_y`` followed by
``ny`` rows of ``nx`` comma-separated values, row ``j = 0`` first.  Floats
are written with 17 significant digits so a write/read round trip is
bit-identical.

PGM export uses the ASCII ``P2`` format with min-max scaling to 0..255;
rows are written top row (largest y) first so images display upright.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid2D, ScalarField


def write_field_csv(path, f: ScalarField) -> None:
    g = f.grid
    with open(path, "w") as fh:
        fh.write(f"{g.nx},{g.ny},{g.h:.17g},{g.origin[0]:.17g},{g.origin[1]:.17g}\n")
        for j in range(g.ny):
            fh.write(",".join(f"{v:.17g}" for v in f.values[j]) + "\n")


def read_field_csv(path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split(",")
        if len(parts) != 5:
            raise ValueError(f"{path}: bad field header {header!r} (want nx,ny,h,ox,oy)")
        nx, ny = int(parts[0]), int(parts[1])
        h, ox, oy = float(parts[2]), float(parts[3]), float(parts[4])
        grid = Grid2D(nx, ny, h, (ox, oy))
        values = np.empty((ny, nx))
        for j in range(ny):
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: truncated after {j} of {ny} rows")
            row = line.strip().split(",")
            if len(row) != nx:
                raise ValueError(f"{path}: row {j} has {len(row)} values, expected {nx}")
            values[j] = [float(v) for v in row]
    return ScalarField(grid, values)


def write_field_pgm(path, f: ScalarField) -> None:
    v = f.values
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        img = np.round((v - lo) / (hi - lo) * 255.0).astype(np.int64)
    else:
        img = np.zeros(v.shape, dtype=np.int64)
    with open(path, "w") as fh:
        fh.write(f"P2\n{f.grid.nx} {f.grid.ny}\n255\n")
        for j in range(f.grid.ny - 1, -1, -1):
            fh.write(" ".join(str(int(p)) for p in img[j]) + "\n")


def write_mask_pgm(path, grid: Grid2D, mask: np.ndarray) -> None:
    """Binary mask as P2 (members white)."""
    write_field_pgm(path, ScalarField(grid, mask.astype(np.float64)))


def write_points_csv(path, points: np.ndarray, comment: str | None = None) -> None:
    """Rows of ``x,y`` world coordinates, optional leading # comment."""
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for x, y in np.atleast_2d(points):
            fh.write(f"{x:.17g},{y:.17g}\n")


def read_points_csv(path) -> np.ndarray:
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'x,y', got {s!r}")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


def write_polylines_csv(path, polylines: list[np.ndarray], labels: list[str] | None = None) -> None:
    """Several polylines in one file: each block starts with ``# <label>``
    and holds one ``x,y`` row per vertex."""
    with open(path, "w") as fh:
        for k, poly in enumerate(polylines):
            label = labels[k] if labels else f"polyline {k}"
            fh.write(f"# {label}\n")
            for x, y in np.atleast_2d(poly):
                fh.write(f"{x:.17g},{y:.17g}\n")


def read_polylines_csv(path) -> list[np.ndarray]:
    polys: list[list] = []
    current: list | None = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                current = []
                polys.append(current)
                continue
            parts = s.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'x,y', got {s!r}")
            if current is None:
                current = []
                polys.append(current)
            current.append((float(parts[0]), float(parts[1])))
    return [np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in polys]
