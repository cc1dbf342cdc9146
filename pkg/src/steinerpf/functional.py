"""Total energy, admissible projection, and the continuation solver.

The total energy of an admissible field phi (eps <= phi <= 1, phi = 1 on
the boundary ring) is the eps-indexed functional

    S_eps(phi) = mm_value(phi) + weight * sum_i d_phi(x_i, x_source),

evaluated by ``s_eps_value`` with the geodesic distances computed by fast
marching on the current phi; ``s_eps_gradient`` is its exact discrete
gradient.
The default connectivity weight is eps**(-1/2); a custom constant may be
supplied instead (with a warning: for shrinking eps the weight must stay
below 1/(eps |ln eps|) asymptotically for minimizers to keep approximating
tree length, and nothing here checks that).

``optimize`` runs projected gradient descent with Armijo backtracking
inside a decreasing-eps continuation: each stage warm-starts from the
previous one (phi = 1 at the first stage), re-marches at every inner
iteration so value and gradient stay consistent, and stops when the
accepted update falls below the stage tolerance.

Descent directions are preconditioned: the step solves

    (1/(2 eps) - 2 eps Lap) direction = L2 gradient

on interior nodes (homogeneous data on the fixed boundary ring), i.e.
gradient descent in the metric of the quadratic part of the energy.  A
plain explicit step would be stability-limited to O(h^2/eps) by that
stiff quadratic part, freezing the slow motion of channels and junctions
long before they settle; the elliptic solve makes unit-order steps stable
and spreads the carving force of a geodesic over its eps-neighborhood
instead of a single cell row.  The operator is constant-coefficient on a
uniform grid, so it is applied exactly with a discrete sine transform.

A non-diagonal metric does not commute with the box projection: once the
channel floor sits at the lower bound, the smoothed image of the
floor's outward gradient would drag free neighbours uphill and no step
of any size descends.  The usual two-metric projection repair applies:
coordinates at a bound whose gradient pushes further out of the box
(plus a thin guard band) take plain gradient steps, and only the
remaining free block is preconditioned.  Restricting input and output of
the solve to the free set keeps that block a principal submatrix of an
SPD operator, so directions stay descent directions, Armijo backtracking
applies unchanged, and accepted energy is asserted non-increasing.  The
whole pipeline is deterministic.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dstn, idstn

from .energy import MmParams, mm_gradient, mm_terms
from .eikonal import DistanceResult, adjoint_gradient, distance_at, fast_march
from .grid import (
    Grid2D,
    ScalarField,
    TerminalSet,
    boundary_mask,
    snap_terminals,
)

ARMIJO_C = 1e-4
STEP_GROW = 1.2
STEP_MIN = 1e-18


class _StagePreconditioner:
    """Applies (1/(2 eps) - 2 eps Lap)^-1 on interior nodes via DST-I.

    This is the inverse of the Hessian of the quadratic energy part, with
    homogeneous Dirichlet conditions on the boundary ring (whose values are
    pinned by the admissible class anyway).
    """

    def __init__(self, grid: Grid2D, eps: float):
        self.grid = grid
        mx, my = grid.nx - 2, grid.ny - 2
        kx = np.sin(np.pi * np.arange(1, mx + 1) / (2.0 * (mx + 1))) ** 2
        ky = np.sin(np.pi * np.arange(1, my + 1) / (2.0 * (my + 1))) ** 2
        lap = (4.0 / grid.h**2) * (ky[:, None] + kx[None, :])
        self.sym = 1.0 / (2.0 * eps) + 2.0 * eps * lap

    def apply(self, grad_raw: np.ndarray) -> np.ndarray:
        """grad_raw holds partial derivatives w.r.t. nodal values; the
        interior block is converted to an L2 density and solved."""
        rhs = grad_raw[1:-1, 1:-1] / self.grid.h**2
        coeff = dstn(rhs, type=1, norm="ortho")
        sol = idstn(coeff / self.sym, type=1, norm="ortho")
        out = np.zeros_like(grad_raw)
        out[1:-1, 1:-1] = sol
        return out


def _two_metric_direction(precond, phi, grad, eps):
    """Descent direction that respects the active box constraints.

    Nodes sitting at a bound (within a small guard band) with the gradient
    pointing out of [eps, 1] keep the raw gradient, scaled to the flat
    curvature 1/(2 eps) of the well so their step size matches the
    preconditioned block; every other node gets the elliptic solve of the
    gradient masked to the free set.  Zeroing active entries on both sides
    of the solve keeps the free block SPD, hence descent.
    """
    band = 1e-9 * (1.0 - eps)
    active = ((phi <= eps + band) & (grad > 0.0)) | ((phi >= 1.0 - band) & (grad < 0.0))
    g_free = np.where(active, 0.0, grad)
    direction = precond.apply(g_free)
    direction[active] = 2.0 * eps * grad[active] / precond.grid.h**2
    return direction


@dataclass
class FunctionalParams:
    """Energy parameters: double-well part plus connectivity weighting."""

    mm: MmParams
    weight_rule: str = "inv_sqrt_eps"
    connectivity_weight: float | None = None

    def __post_init__(self):
        if self.weight_rule == "inv_sqrt_eps":
            self.connectivity_weight = float(self.mm.eps) ** -0.5
        elif self.weight_rule == "custom":
            if self.connectivity_weight is None or self.connectivity_weight < 0:
                raise ValueError("custom weight rule needs a nonnegative connectivity_weight")
            warnings.warn(
                "custom connectivity weight: as eps shrinks the weight must stay "
                "below 1/(eps |ln eps|) for minimizers to keep approximating tree "
                "length; this is not checked",
                stacklevel=2,
            )
        else:
            raise ValueError(f"unknown weight rule {self.weight_rule!r}")


@dataclass
class StageConfig:
    """Inner-loop settings of one continuation stage."""

    eps: float
    max_iters: int = 2000
    tol_scale: float = 1e-6  # displacement tolerance = tol_scale * max(1, |E0|)
    step0: float = 1.0


@dataclass
class ContinuationSchedule:
    stages: list[StageConfig]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("schedule has no stages")
        eps = [s.eps for s in self.stages]
        if any(not 0 < e < 1 for e in eps):
            raise ValueError(f"stage eps values must lie in (0, 1), got {eps}")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"stage eps values must be strictly decreasing, got {eps}")

    @property
    def eps_values(self) -> list[float]:
        return [s.eps for s in self.stages]

    @property
    def eps_min(self) -> float:
        return self.stages[-1].eps

    @classmethod
    def default(
        cls,
        grid: Grid2D,
        eps0: float | None = None,
        ratio: float = 0.7,
        eps_min: float | None = None,
        max_iters: int = 2000,
        tol_scale: float = 1e-6,
        step0: float = 1.0,
    ) -> "ContinuationSchedule":
        """Geometric eps ladder from about half the domain diameter down to
        the resolution floor (6h by default).

        The floor keeps the final transition layers wide enough that the
        centered-stencil energy-density check stays within its O(h) budget:
        the worst pointwise slack of a resolved layer scales like
        -0.005*(h/eps)^3/h, which crosses -5h near eps = 6h on fine grids.
        Narrower floors sharpen the channels but fail that check."""
        if not 0 < ratio < 1:
            raise ValueError(f"eps ratio must lie in (0, 1), got {ratio}")
        if eps_min is None:
            eps_min = 6.0 * grid.h
        if eps_min < grid.h:
            raise ValueError(f"eps_min {eps_min} below grid resolution h={grid.h}")
        if eps_min >= 1.0:
            raise ValueError(
                f"grid too coarse for any admissible relaxation width: eps_min {eps_min} >= 1"
            )
        if eps0 is None:
            eps0 = min(0.5 * grid.diameter, 0.9)
        if eps0 <= eps_min:
            values = [eps_min]
        else:
            values = [eps0]
            while values[-1] * ratio > eps_min * (1.0 + 1e-9):
                values.append(values[-1] * ratio)
            if values[-1] > eps_min * (1.0 + 1e-9):
                values.append(eps_min)
        return cls([StageConfig(e, max_iters, tol_scale, step0) for e in values])


@dataclass
class StageReport:
    eps: float
    energy: float
    well: float
    dirichlet: float
    p_reg: float
    connectivity: float  # weighted term as it enters the energy
    connectivity_weight: float
    distances: np.ndarray
    iterations: int
    final_step: float
    wall_time: float


@dataclass
class SolveReport:
    """Everything a solve produced: per-stage numbers plus final fields."""

    grid: Grid2D
    terminals: TerminalSet
    terminal_nodes: list[tuple[int, int]]
    snap_displacements: np.ndarray
    stages: list[StageReport]
    phi: ScalarField
    distance: DistanceResult

    @property
    def final(self) -> StageReport:
        return self.stages[-1]

    @property
    def total_energy(self) -> float:
        return self.final.energy


def check_admissible(phi: ScalarField, eps: float) -> None:
    """Raise unless eps <= phi <= 1 nodewise and phi = 1 on the boundary."""
    v = phi.values
    if np.any(v < eps):
        j, i = np.unravel_index(int(np.argmin(v)), v.shape)
        raise ValueError(f"phi inadmissible at node (i={i}, j={j}): {v[j, i]} below eps={eps}")
    if np.any(v > 1.0):
        j, i = np.unravel_index(int(np.argmax(v)), v.shape)
        raise ValueError(f"phi inadmissible at node (i={i}, j={j}): {v[j, i]} above 1")
    bnd = boundary_mask(phi.grid)
    bad = bnd & (v != 1.0)
    if np.any(bad):
        j, i = np.unravel_index(int(np.argmax(bad)), v.shape)
        raise ValueError(f"phi must equal 1 on the boundary; node (i={i}, j={j}) has {v[j, i]}")


def project_admissible(phi: ScalarField, eps: float) -> ScalarField:
    """Clamp into [eps, 1] and pin the boundary ring to 1 (idempotent)."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    v = np.clip(phi.values, eps, 1.0)
    v[boundary_mask(phi.grid)] = 1.0
    return ScalarField(phi.grid, v)


def _energy_at(phi, nodes, source_index, params):
    """Energy pieces for pre-snapped terminal nodes; phi assumed admissible."""
    res = fast_march(phi, nodes[source_index])
    dists = distance_at(res, nodes)
    well, dirichlet, reg = mm_terms(phi, params.mm)
    conn = params.connectivity_weight * float(np.sum(dists))
    breakdown = {
        "well": well,
        "dirichlet": dirichlet,
        "p_reg": reg,
        "connectivity": conn,
        "total": well + dirichlet + reg + conn,
    }
    return breakdown["total"], breakdown, res, dists


def s_eps_value(phi: ScalarField, terminals: TerminalSet, params: FunctionalParams):
    """Full energy of an admissible field.

    Returns (value, term breakdown dict, DistanceResult); the distance
    result can be handed to ``s_eps_gradient`` to avoid re-marching.
    """
    check_admissible(phi, params.mm.eps)
    nodes, _ = snap_terminals(phi.grid, terminals)
    value, breakdown, res, _ = _energy_at(phi, nodes, terminals.source_index, params)
    return value, breakdown, res


def _gradient_at(phi, nodes, source_index, params, res):
    g = mm_gradient(phi, params.mm).values
    w = params.connectivity_weight
    if w != 0.0:
        seeds = [(n, w) for k, n in enumerate(nodes) if k != source_index]
        g = g + adjoint_gradient(res, phi, seeds).values
        g[boundary_mask(phi.grid)] = 0.0
    return ScalarField(phi.grid, g)


def s_eps_gradient(
    phi: ScalarField,
    terminals: TerminalSet,
    params: FunctionalParams,
    result: DistanceResult | None = None,
) -> ScalarField:
    """Exact gradient of ``s_eps_value`` (boundary entries zeroed).

    With zero connectivity weight this is bit-for-bit ``mm_gradient``.
    ``result`` may carry the march already computed at phi; otherwise the
    source terminal is re-marched here.
    """
    check_admissible(phi, params.mm.eps)
    nodes, _ = snap_terminals(phi.grid, terminals)
    if result is None:
        result = fast_march(phi, nodes[terminals.source_index])
    return _gradient_at(phi, nodes, terminals.source_index, params, result)


def _make_params(eps, weight_rule, custom_weight, p_reg, p_exponent, p_reg_coeff):
    mm = MmParams(eps, p_reg=p_reg, p_exponent=p_exponent, p_reg_coeff=p_reg_coeff)
    if weight_rule == "custom":
        return FunctionalParams(mm, "custom", custom_weight)
    return FunctionalParams(mm, weight_rule)


def optimize(
    grid: Grid2D,
    terminals: TerminalSet,
    schedule: ContinuationSchedule,
    weight_rule: str = "inv_sqrt_eps",
    custom_weight: float | None = None,
    p_reg: bool = False,
    p_exponent: float = 4.0,
    p_reg_coeff: float | None = None,
    callback=None,
) -> SolveReport:
    """Minimize the total energy along the continuation schedule.

    ``callback(stage_index, stage_report, phi, result)`` runs after each
    stage (snapshot hook).  Identical inputs produce identical reports up to
    the wall-time entries; there is no randomness anywhere.
    """
    if schedule.eps_min < grid.h:
        raise ValueError(f"eps_min {schedule.eps_min} below grid resolution h={grid.h}")
    nodes, disp = snap_terminals(grid, terminals)
    margin = 2.0 * grid.h
    lx, ly = grid.extent
    for k, (x, y) in enumerate(terminals.points):
        if (
            x - grid.origin[0] < margin
            or grid.origin[0] + lx - x < margin
            or y - grid.origin[1] < margin
            or grid.origin[1] + ly - y < margin
        ):
            raise ValueError(
                f"terminal {k} at ({x}, {y}) is within 2h of the boundary; enlarge the domain"
            )
    src = terminals.source_index

    phi = ScalarField.full(grid, 1.0)
    stages: list[StageReport] = []
    res = None

    for stage in schedule.stages:
        t0 = time.perf_counter()
        eps = stage.eps
        params = _make_params(eps, weight_rule, custom_weight, p_reg, p_exponent, p_reg_coeff)
        phi = project_admissible(phi, eps)
        precond = _StagePreconditioner(grid, eps)
        energy, breakdown, res, dists = _energy_at(phi, nodes, src, params)
        tol = stage.tol_scale * max(1.0, abs(energy))
        # the metric makes unit-order steps the natural scale at every eps,
        # so each stage restarts the line search from step0
        alpha = stage.step0

        it = 0
        while it < stage.max_iters:
            grad = _gradient_at(phi, nodes, src, params, res)
            direction = _two_metric_direction(precond, phi.values, grad.values, eps)
            accepted = False
            while alpha >= STEP_MIN:
                trial = project_admissible(
                    ScalarField(grid, phi.values - alpha * direction), eps
                )
                delta = trial.values - phi.values
                decrease = -float(np.sum(grad.values * delta))
                e_t, bd_t, res_t, dists_t = _energy_at(trial, nodes, src, params)
                if e_t <= energy - ARMIJO_C * decrease:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break  # no descent step exists at any representable size
            if e_t > energy + 1e-12 * max(1.0, abs(energy)):
                raise RuntimeError(
                    "energy increased on an accepted step: "
                    f"stage eps={eps}, iteration {it}, {energy} -> {e_t}, "
                    f"step {alpha}, decrease {decrease}; breakdown {bd_t}"
                )
            step_inf = float(np.max(np.abs(delta)))
            phi, energy, breakdown, res, dists = trial, e_t, bd_t, res_t, dists_t
            it += 1
            alpha = min(alpha * STEP_GROW, 1e9)
            if step_inf < tol:
                break

        report = StageReport(
            eps=eps,
            energy=energy,
            well=breakdown["well"],
            dirichlet=breakdown["dirichlet"],
            p_reg=breakdown["p_reg"],
            connectivity=breakdown["connectivity"],
            connectivity_weight=params.connectivity_weight,
            distances=dists.copy(),
            iterations=it,
            final_step=alpha,
            wall_time=time.perf_counter() - t0,
        )
        stages.append(report)
        if callback is not None:
            callback(len(stages) - 1, report, phi, res)

    return SolveReport(
        grid=grid,
        terminals=terminals,
        terminal_nodes=nodes,
        snap_displacements=disp,
        stages=stages,
        phi=phi,
        distance=res,
    )
