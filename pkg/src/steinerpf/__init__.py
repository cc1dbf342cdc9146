"""Phase-field computation of Steiner trees.

The package minimizes, over fields phi with eps <= phi <= 1 and phi = 1 on
the boundary of a rectangle, the energy

    (1/4 eps) * int (1 - phi)^2  +  eps * int |grad phi|^2
        + weight(eps) * sum_i d_phi(x_i, x_1),

where d_phi is the geodesic distance with metric weight phi and x_1..x_N are
prescribed terminal points.  As eps shrinks, the minimizing field develops a
thin low-phi channel network connecting the terminals whose geometry
approaches the Steiner minimal tree.  The package provides the energy and its
exact discrete gradient (geodesic part differentiated through a fast-marching
tape), a projected-gradient continuation solver, extraction and measurement
of the channel network, an exact enumeration-based Steiner solver for up to
five terminals, and a command line front end.
"""

from .grid import Grid2D, ScalarField, TerminalSet, boundary_mask, gradient_sq, integrate, snap_to_grid
from .energy import MmParams, mm_gradient, mm_value, p_diagnostic
from .eikonal import (
    DistanceResult,
    FmmTape,
    adjoint_gradient,
    backtrack_geodesic,
    distance_at,
    fast_march,
)
from .functional import (
    ContinuationSchedule,
    FunctionalParams,
    SolveReport,
    StageConfig,
    optimize,
    project_admissible,
    s_eps_gradient,
    s_eps_value,
)
from .extraction import (
    ExtractedSet,
    LengthEstimate,
    estimate_length,
    extract_set,
    i_lambda,
    junction_angles,
)
from .oracle import SteinerSolution, SteinerTopology, enumerate_topologies, optimize_points, solve_exact
from .cli import RunConfig

__version__ = "0.1.0"

__all__ = [
    "Grid2D",
    "ScalarField",
    "TerminalSet",
    "snap_to_grid",
    "gradient_sq",
    "integrate",
    "boundary_mask",
    "MmParams",
    "mm_value",
    "mm_gradient",
    "p_diagnostic",
    "DistanceResult",
    "FmmTape",
    "fast_march",
    "distance_at",
    "adjoint_gradient",
    "backtrack_geodesic",
    "FunctionalParams",
    "ContinuationSchedule",
    "StageConfig",
    "SolveReport",
    "s_eps_value",
    "s_eps_gradient",
    "project_admissible",
    "optimize",
    "ExtractedSet",
    "LengthEstimate",
    "extract_set",
    "estimate_length",
    "i_lambda",
    "junction_angles",
    "SteinerTopology",
    "SteinerSolution",
    "enumerate_topologies",
    "optimize_points",
    "solve_exact",
    "RunConfig",
    "__version__",
]
