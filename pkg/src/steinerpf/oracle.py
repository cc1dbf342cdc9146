"""Exact Steiner trees for 2..5 terminals by topology enumeration.

A full Steiner topology on n terminals has n - 2 extra points of degree 3;
every shorter degenerate tree arises from a full topology by letting extra
points collapse onto neighbors, so enumerating full topologies suffices.
They are generated recursively: a topology on m terminals comes from one on
m - 1 by splitting an edge with a new degree-3 point joined to terminal m.
This yields 1, 1, 3, 15 topologies for n = 2, 3, 4, 5 and each exactly once.

For a fixed topology the tree length is convex in the extra points'
coordinates, and cyclic re-centering — each extra point moved to the Fermat
point of its three neighbors — drives it to the optimum.  The Fermat point
itself: if some angle of the neighbor triangle is >= 120 degrees it is that
vertex (this is what produces collapses); otherwise it is the interior
isogonic point, seeded in closed form via trilinear coordinates
csc(alpha_i + 60 deg) and polished with Weiszfeld iterations.

The best topology optimum over the enumeration is the Steiner minimal tree;
it is never longer than the Euclidean minimum spanning tree and never
shorter than sqrt(3)/2 times it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_TERMINALS = 5
MAX_SWEEPS = 10**6
SWEEP_TOL = 1e-12  # max coordinate movement per sweep, times max(1, extent)
COLLAPSE_TOL = 1e-9


@dataclass(frozen=True)
class SteinerTopology:
    """Tree over vertices 0..n+s-1: terminals first, then extra points."""

    n_terminals: int
    n_steiner: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        nv = self.n_terminals + self.n_steiner
        if len(self.edges) != nv - 1:
            raise ValueError(f"tree on {nv} vertices needs {nv - 1} edges, got {len(self.edges)}")
        deg = [0] * nv
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        if any(d < 1 for d in deg[: self.n_terminals]):
            raise ValueError("every terminal must have degree >= 1")
        if any(d != 3 for d in deg[self.n_terminals :]):
            raise ValueError("every extra point must have degree 3")

    def neighbors(self, v: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return out


@dataclass
class SteinerSolution:
    topology: SteinerTopology
    terminals: np.ndarray
    steiner_points: np.ndarray
    length: float
    collapsed: list[bool]
    angles: list[list[float]]  # per extra point: pairwise edge angles, degrees
    direction_residuals: list[float]  # |sum of unit edge directions|, non-collapsed
    sweeps: int

    def vertex_position(self, v: int) -> np.ndarray:
        n = self.topology.n_terminals
        return self.terminals[v] if v < n else self.steiner_points[v - n]

    def edge_segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (self.vertex_position(u), self.vertex_position(v)) for u, v in self.topology.edges
        ]


def enumerate_topologies(n: int) -> list[SteinerTopology]:
    """All full topologies on terminals 0..n-1 (extra points n..2n-3)."""
    if not 2 <= n <= MAX_TERMINALS:
        raise ValueError(f"topology enumeration supports 2..{MAX_TERMINALS} terminals, got {n}")
    level: list[list[tuple[int, int]]] = [[(0, 1)]]
    for m in range(3, n + 1):
        w = n + (m - 3)  # label of the extra point introduced at this level
        t = m - 1
        nxt = []
        for edges in level:
            for k, (u, v) in enumerate(edges):
                nxt.append(edges[:k] + edges[k + 1 :] + [(u, w), (w, v), (w, t)])
        level = nxt
    return [SteinerTopology(n, n - 2 if n > 2 else 0, tuple(e)) for e in level]


def _angle_cos(at, p, q):
    u = p - at
    v = q - at
    nu = np.hypot(*u)
    nv = np.hypot(*v)
    if nu == 0.0 or nv == 0.0:
        return -1.0  # degenerate side: treat as a straight (180 degree) angle
    return float(np.dot(u, v) / (nu * nv))


def fermat_point(p1, p2, p3) -> np.ndarray:
    """Point minimizing the summed distance to three points.

    Returns the vertex itself when its angle reaches 120 degrees (or when
    points coincide); otherwise the interior isogonic point.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in (p1, p2, p3)]
    # coincident neighbors: min of 2|x-a| + |x-b| is a
    for i in range(3):
        for j in range(i + 1, 3):
            if np.hypot(*(pts[i] - pts[j])) == 0.0:
                return pts[i].copy()
    # vertex case: angle >= 120 degrees <=> cos <= -1/2
    for i in range(3):
        others = [pts[j] for j in range(3) if j != i]
        if _angle_cos(pts[i], others[0], others[1]) <= -0.5:
            return pts[i].copy()
    # interior case: closed-form seed from trilinears csc(alpha + 60 deg)
    sides = np.array(
        [
            np.hypot(*(pts[1] - pts[2])),
            np.hypot(*(pts[2] - pts[0])),
            np.hypot(*(pts[0] - pts[1])),
        ]
    )
    angles = np.array(
        [
            np.arccos(np.clip(_angle_cos(pts[0], pts[1], pts[2]), -1.0, 1.0)),
            np.arccos(np.clip(_angle_cos(pts[1], pts[2], pts[0]), -1.0, 1.0)),
            np.arccos(np.clip(_angle_cos(pts[2], pts[0], pts[1]), -1.0, 1.0)),
        ]
    )
    w = sides / np.sin(angles + np.pi / 3.0)
    x = (w[0] * pts[0] + w[1] * pts[1] + w[2] * pts[2]) / np.sum(w)
    # Weiszfeld polish
    scale = max(1.0, float(sides.max()))
    for _ in range(200):
        d = np.array([max(np.hypot(*(x - p)), 1e-300) for p in pts])
        xn = (pts[0] / d[0] + pts[1] / d[1] + pts[2] / d[2]) / np.sum(1.0 / d)
        move = float(np.hypot(*(xn - x)))
        x = xn
        if move < 1e-15 * scale:
            break
    return x


def _tree_length(topology, terminals, steiner):
    n = topology.n_terminals

    def pos(v):
        return terminals[v] if v < n else steiner[v - n]

    return float(sum(np.hypot(*(pos(u) - pos(v))) for u, v in topology.edges))


def optimize_points(topology: SteinerTopology, terminals: np.ndarray) -> tuple[np.ndarray, int]:
    """Optimal extra-point coordinates for one topology via cyclic Fermat
    re-centering.  Returns (coordinates, sweeps used)."""
    terminals = np.asarray(terminals, dtype=np.float64)
    n, s = topology.n_terminals, topology.n_steiner
    if s == 0:
        return np.zeros((0, 2)), 0
    extent = max(1.0, float(np.max(terminals.max(axis=0) - terminals.min(axis=0))))
    pos = np.vstack([terminals, np.tile(terminals.mean(axis=0), (s, 1))])
    nbrs = [topology.neighbors(n + k) for k in range(s)]
    # spread the initial stack: a few averaging passes over neighbor positions
    for _ in range(5):
        for k in range(s):
            pos[n + k] = np.mean([pos[v] for v in nbrs[k]], axis=0)
    for sweep in range(1, MAX_SWEEPS + 1):
        move = 0.0
        for k in range(s):
            q = [pos[v] for v in nbrs[k]]
            new = fermat_point(q[0], q[1], q[2])
            move = max(move, float(np.hypot(*(new - pos[n + k]))))
            pos[n + k] = new
        if move < SWEEP_TOL * extent:
            return pos[n:].copy(), sweep
    raise RuntimeError(
        f"extra-point re-centering did not converge in {MAX_SWEEPS} sweeps "
        f"(last movement {move:.3e})"
    )


def _classify(topology, terminals, steiner):
    """Collapse flags, angles, and direction residuals at the extra points."""
    n = topology.n_terminals
    extent = max(1.0, float(np.max(terminals.max(axis=0) - terminals.min(axis=0)))) if len(
        terminals
    ) else 1.0
    tol = COLLAPSE_TOL * extent

    def pos(v):
        return terminals[v] if v < n else steiner[v - n]

    collapsed, angles, residuals = [], [], []
    for k in range(topology.n_steiner):
        p = steiner[k]
        dirs = []
        is_collapsed = False
        for v in topology.neighbors(n + k):
            d = pos(v) - p
            r = float(np.hypot(*d))
            if r <= tol:
                is_collapsed = True
            else:
                dirs.append(d / r)
        collapsed.append(is_collapsed)
        if is_collapsed or len(dirs) < 3:
            angles.append([])
            residuals.append(np.nan)
        else:
            pair = []
            for a in range(3):
                for b in range(a + 1, 3):
                    c = float(np.clip(np.dot(dirs[a], dirs[b]), -1.0, 1.0))
                    pair.append(float(np.degrees(np.arccos(c))))
            angles.append(pair)
            residuals.append(float(np.hypot(*np.sum(dirs, axis=0))))
    return collapsed, angles, residuals


def solve_topology(topology: SteinerTopology, terminals: np.ndarray) -> SteinerSolution:
    terminals = np.asarray(terminals, dtype=np.float64)
    steiner, sweeps = optimize_points(topology, terminals)
    length = _tree_length(topology, terminals, steiner)
    collapsed, angles, residuals = _classify(topology, terminals, steiner)
    return SteinerSolution(
        topology=topology,
        terminals=terminals,
        steiner_points=steiner,
        length=length,
        collapsed=collapsed,
        angles=angles,
        direction_residuals=residuals,
        sweeps=sweeps,
    )


def solve_exact(terminals: np.ndarray) -> SteinerSolution:
    """Steiner minimal tree over all topologies; 2 <= N <= 5 terminals."""
    terminals = np.asarray(terminals, dtype=np.float64).reshape(-1, 2)
    n = len(terminals)
    if not 2 <= n <= MAX_TERMINALS:
        raise ValueError(f"exact solver supports 2..{MAX_TERMINALS} terminals, got {n}")
    d = terminals[:, None, :] - terminals[None, :, :]
    dist = np.hypot(d[..., 0], d[..., 1])
    iu = np.triu_indices(n, 1)
    if np.min(dist[iu]) == 0.0:
        raise ValueError("terminals must be pairwise distinct")
    best = None
    for topo in enumerate_topologies(n):
        sol = solve_topology(topo, terminals)
        if best is None or sol.length < best.length:
            best = sol
    return best


def euclidean_mst_length(points: np.ndarray) -> float:
    """Length of the Euclidean minimum spanning tree (Prim)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n < 2:
        return 0.0
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = np.hypot(pts[:, 0] - pts[0, 0], pts[:, 1] - pts[0, 1])
    total = 0.0
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        k = int(np.argmin(cand))
        total += float(cand[k])
        in_tree[k] = True
        dk = np.hypot(pts[:, 0] - pts[k, 0], pts[:, 1] - pts[k, 1])
        best = np.minimum(best, dk)
    return total
