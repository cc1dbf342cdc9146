"""Command line front end.

Three subcommands:

* ``solve``    — run the continuation solver on a terminals CSV and write a
  run directory: report.txt, final fields (CSV + PGM), extracted network,
  geodesics, junction list, figures, and a params.txt that reproduces the
  run when passed back via --config.
* ``oracle``   — exact shortest-network reference for 2..5 terminals.
* ``diagnose`` — post-hoc checks on a finished run directory: pointwise
  energy bound slack, sweep lengths at several radii, ratio diagnostics.

The terminals file holds one ``x,y`` row per terminal; an optional first
line ``# source <k>`` selects the distance source (default terminal 0).
Config files use ``key = value`` lines with ``#`` comments; explicit
command line flags win over config values.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from . import figures
from .energy import MmParams, p_diagnostic
from .eikonal import fast_march
from .extraction import (
    default_threshold,
    skeleton_set,
    estimate_length,
    extract_set,
    geodesic_paths,
    geodesic_union_length,
    i_lambda,
    junction_angles,
)
from .field_io import (
    read_field_csv,
    read_points_csv,
    write_field_csv,
    write_field_pgm,
    write_mask_pgm,
    write_points_csv,
    write_polylines_csv,
)
from .functional import ContinuationSchedule, optimize
from .grid import Grid2D, ScalarField, TerminalSet, snap_terminals
from .oracle import euclidean_mst_length, solve_exact

_CONFIG_TYPES = {
    "grid": int,
    "h": float,
    "margin": float,
    "eps0": float,
    "eps_ratio": float,
    "eps_min": float,
    "weight_rule": str,
    "preg": str,
    "tau": float,
    "snapshots": int,
    "directions": int,
    "threads": int,
}


def read_config(path: str) -> dict:
    """key = value file; unknown keys and bad values are named with their
    line number."""
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            s = raw.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
            key, _, val = s.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _CONFIG_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown option {key!r}")
            try:
                out[key] = _CONFIG_TYPES[key](val)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {val!r}") from None
    return out


@dataclass
class RunConfig:
    """Resolved options of one solve run.

    Command line flags override config-file values, which override the
    defaults here; ``from_args`` applies that precedence.  params.txt in a
    run directory is itself a valid config file, so a finished run can be
    reproduced with --config.
    """

    out: str = "steinerpf_out"
    grid: int | None = None  # nodes along the longer axis (build_grid default 129)
    h: float | None = None  # spacing, alternative to grid
    margin: float | None = None  # domain margin (default quarter diameter)
    eps0: float | None = None
    eps_ratio: float = 0.7
    eps_min: float | None = None
    weight_rule: str = "inv_sqrt_eps"
    preg: str = "off"
    tau: float | None = None
    snapshots: int = 0  # write phi_stage<k> every this many stages; 0 = never
    directions: int = 120
    threads: int = 1

    def __post_init__(self):
        if self.grid is not None and self.h is not None:
            raise ValueError("pass either a grid size or a spacing, not both")
        if self.margin is not None and not self.margin > 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.preg not in ("off", "on"):
            raise ValueError(f"preg must be off or on, got {self.preg!r}")
        if self.snapshots < 0:
            raise ValueError(f"snapshot cadence must be >= 0, got {self.snapshots}")
        _parse_weight_rule(self.weight_rule)

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        cfg = read_config(args.config) if getattr(args, "config", None) else {}
        kw = {}
        for f in fields(cls):
            v = getattr(args, f.name, None)
            if v is None:
                v = cfg.get(f.name)
            if v is not None:
                kw[f.name] = v
        return cls(**kw)


def _parse_weight_rule(rule: str) -> tuple[str, float | None]:
    if rule == "inv_sqrt_eps":
        return rule, None
    if rule.startswith("custom:"):
        try:
            return "custom", float(rule.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad custom weight in {rule!r}") from None
    raise ValueError(f"unknown weight rule {rule!r} (use inv_sqrt_eps or custom:<value>)")


def load_terminals(path: str) -> TerminalSet:
    """Points CSV with an optional leading ``# source <k>`` marker."""
    source = 0
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("#"):
        toks = first[1:].split()
        if len(toks) == 2 and toks[0] == "source":
            try:
                source = int(toks[1])
            except ValueError:
                raise ValueError(f"{path}: bad source index {toks[1]!r}") from None
    pts = read_points_csv(path)
    if len(pts) < 2:
        raise ValueError(f"{path}: need at least two terminals, found {len(pts)}")
    return TerminalSet(points=pts, source_index=source)


def build_grid(
    terminals: TerminalSet,
    n_long: int | None = None,
    h: float | None = None,
    margin: float | None = None,
) -> Grid2D:
    """Axis-aligned domain: terminal bounding box grown by ``margin`` on
    every side (default a quarter of the terminal diameter), sampled with
    uniform spacing.  ``n_long`` fixes the node count on the longer axis;
    alternatively ``h`` fixes the spacing directly."""
    pts = terminals.points
    d = pts[:, None, :] - pts[None, :, :]
    diam = float(np.max(np.hypot(d[..., 0], d[..., 1])))
    if margin is None:
        margin = 0.25 * diam
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin}")
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    wx, wy = float(hi[0] - lo[0]), float(hi[1] - lo[1])
    if h is not None and n_long is not None:
        raise ValueError("pass either a grid size or a spacing, not both")
    if h is None:
        n_long = 129 if n_long is None else n_long
        if n_long < 16:
            raise ValueError(f"grid size must be at least 16 nodes, got {n_long}")
        h = max(wx, wy) / (n_long - 1)
    if not h > 0:
        raise ValueError(f"grid spacing must be positive, got {h}")
    nx = max(int(np.ceil(wx / h - 1e-9)) + 1, 3)
    ny = max(int(np.ceil(wy / h - 1e-9)) + 1, 3)
    cx, cy = float(lo[0] + hi[0]) / 2.0, float(lo[1] + hi[1]) / 2.0
    origin = (cx - 0.5 * (nx - 1) * h, cy - 0.5 * (ny - 1) * h)
    return Grid2D(nx=nx, ny=ny, h=float(h), origin=origin)


# ---------------------------------------------------------------------------
# solve


def _write_params(path, values: dict) -> None:
    with open(path, "w") as fh:
        fh.write("# resolved run parameters; reusable via --config\n")
        for k, v in values.items():
            if isinstance(v, float):
                fh.write(f"{k} = {v:.17g}\n")
            elif isinstance(v, bool):
                fh.write(f"{k} = {'on' if v else 'off'}\n")
            else:
                fh.write(f"{k} = {v}\n")


def cmd_solve(args) -> int:
    t_start = time.perf_counter()
    rc = RunConfig.from_args(args)

    terminals = load_terminals(args.terminals)
    grid = build_grid(terminals, n_long=rc.grid, h=rc.h, margin=rc.margin)

    schedule = ContinuationSchedule.default(
        grid,
        eps0=rc.eps0,
        ratio=rc.eps_ratio,
        eps_min=rc.eps_min,
    )
    weight_rule, custom_weight = _parse_weight_rule(rc.weight_rule)
    snapshots = rc.snapshots
    directions = rc.directions
    threads = rc.threads

    out = rc.out
    os.makedirs(out, exist_ok=True)

    print(f"grid {grid.nx}x{grid.ny}, h={grid.h:.6g}, origin=({grid.origin[0]:.6g}, {grid.origin[1]:.6g})")
    print(f"continuation: {len(schedule.stages)} stages, eps {schedule.stages[0].eps:.6g} -> {schedule.eps_min:.6g}")

    def stage_hook(k, rep, phi, res):
        print(
            f"  stage {k}: eps={rep.eps:.6g}  energy={rep.energy:.9g}  "
            f"iters={rep.iterations}  step={rep.final_step:.3g}  {rep.wall_time:.2f}s"
        )
        if snapshots > 0 and k % snapshots == 0:
            write_field_csv(os.path.join(out, f"phi_stage{k}.csv"), phi)
            write_field_pgm(os.path.join(out, f"phi_stage{k}.pgm"), phi)

    report = optimize(
        grid,
        terminals,
        schedule,
        weight_rule=weight_rule,
        custom_weight=custom_weight,
        p_reg=(rc.preg == "on"),
        callback=stage_hook,
    )

    tau = rc.tau
    if tau is None:
        tau = default_threshold(report.distance, terminals, schedule.eps_min)
    extracted = extract_set(report.distance.u, tau, terminals)
    lengths = estimate_length(extracted, report.distance, terminals, report.total_energy)
    geodesics = geodesic_paths(report.distance, terminals)
    junctions = junction_angles(extracted, keep_xy=terminals.points)
    sweep_radius = 8.0 * grid.h
    sweep = i_lambda(
        skeleton_set(extracted), sweep_radius, n_directions=directions, threads=threads
    )

    # field and network artifacts
    write_field_csv(os.path.join(out, "phi_final.csv"), report.phi)
    write_field_pgm(os.path.join(out, "phi_final.pgm"), report.phi)
    write_field_csv(os.path.join(out, "u_final.csv"), report.distance.u)
    write_field_pgm(os.path.join(out, "u_final.pgm"), report.distance.u)
    write_field_csv(
        os.path.join(out, "K.csv"), ScalarField(grid, extracted.mask.astype(np.float64))
    )
    write_mask_pgm(os.path.join(out, "K.pgm"), grid, extracted.mask)
    write_polylines_csv(
        os.path.join(out, "geodesics.csv"),
        geodesics,
        labels=[f"geodesic from terminal {k}" for k in terminals.others()],
    )
    write_points_csv(
        os.path.join(out, "terminals.csv"),
        terminals.points,
        comment=f"source {terminals.source_index}",
    )
    with open(os.path.join(out, "junctions.txt"), "w") as fh:
        if not junctions:
            fh.write("no junctions found\n")
        for k, j in enumerate(junctions):
            fh.write(f"junction {k}: x={j.position[0]:.9g} y={j.position[1]:.9g} branches={j.n_branches}\n")
            fh.write("  angles_deg: " + " ".join(f"{a:.3f}" for a in j.angles) + "\n")
    _write_params(
        os.path.join(out, "params.txt"),
        {
            "h": grid.h,
            "margin": rc.margin if rc.margin is not None else 0.25 * _terminal_diameter(terminals),
            "eps0": schedule.stages[0].eps,
            "eps_ratio": rc.eps_ratio,
            "eps_min": schedule.eps_min,
            "weight_rule": rc.weight_rule,
            "preg": rc.preg,
            "tau": tau,
            "snapshots": snapshots,
            "directions": directions,
            "threads": threads,
        },
    )

    # figures
    figures.save_field_figure(
        os.path.join(out, "phi_final.png"), report.phi, terminals, title="phase field (final stage)"
    )
    figures.save_field_figure(
        os.path.join(out, "u_final.png"),
        report.distance.u,
        terminals,
        title="arrival field",
        cmap="magma",
    )
    figures.save_extraction_figure(
        os.path.join(out, "network.png"), extracted, terminals, geodesics
    )
    figures.save_energy_history_figure(os.path.join(out, "energy_history.png"), report.stages)

    wall = time.perf_counter() - t_start
    _write_report(
        os.path.join(out, "report.txt"),
        report,
        schedule,
        tau,
        extracted,
        lengths,
        junctions,
        sweep,
        sweep_radius,
        wall,
    )
    print(f"run directory: {out}  ({wall:.1f}s)")
    print(
        f"lengths: energy={lengths.via_energy:.6g}  graph={lengths.via_graph:.6g}  "
        f"skeleton={lengths.via_skeleton:.6g}"
    )
    return 0


def _terminal_diameter(terminals: TerminalSet) -> float:
    pts = terminals.points
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.max(np.hypot(d[..., 0], d[..., 1])))


def _write_report(path, report, schedule, tau, extracted, lengths, junctions, sweep, sweep_radius, wall):
    g = report.grid
    with open(path, "w") as fh:
        fh.write("phase-field shortest network: run report\n")
        fh.write("=" * 55 + "\n\n")
        fh.write(f"grid: {g.nx} x {g.ny} nodes, h = {g.h:.9g}\n")
        fh.write(f"origin: ({g.origin[0]:.9g}, {g.origin[1]:.9g})\n")
        fh.write(f"terminals ({report.terminals.n}, source {report.terminals.source_index}):\n")
        for k, (x, y) in enumerate(report.terminals.points):
            i, j = report.terminal_nodes[k]
            fh.write(
                f"  {k}: ({x:.9g}, {y:.9g}) -> node ({i}, {j}), "
                f"snap distance {report.snap_displacements[k]:.3g}\n"
            )
        fh.write(f"\ncontinuation stages ({len(report.stages)}):\n")
        fh.write(
            "  idx        eps          energy        well     gradient      connect  iters    time\n"
        )
        for k, s in enumerate(report.stages):
            fh.write(
                f"  {k:3d}  {s.eps:9.6f}  {s.energy:14.9g}  {s.well:10.6g}  {s.dirichlet:10.6g}"
                f"  {s.connectivity:10.6g}  {s.iterations:5d}  {s.wall_time:6.2f}\n"
            )
        final = report.final
        fh.write(f"\nfinal energy: {final.energy:.12g} at eps = {final.eps:.9g}\n")
        fh.write(
            "terminal distances (from source): "
            + " ".join(f"{v:.9g}" for v in final.distances)
            + "\n"
        )
        fh.write(f"\nextraction threshold tau = {tau:.12g}\n")
        fh.write(
            f"extracted set: {extracted.n_cells} cells, {extracted.n_components} component(s), "
            f"connected = {extracted.connected}\n"
        )
        for k, (ok, dist) in enumerate(extracted.terminal_coverage):
            fh.write(f"  terminal {k}: distance to set {dist:.6g} ({'covered' if ok else 'NOT COVERED'})\n")
        fh.write("\nlength estimates:\n")
        fh.write(f"  via energy:   {lengths.via_energy:.9g}\n")
        fh.write(f"  via graph:    {lengths.via_graph:.9g}\n")
        fh.write(f"  via skeleton: {lengths.via_skeleton:.9g}\n")
        fh.write(
            f"  directional sweep (radius {sweep_radius:.6g}): {sweep:.9g}"
            f"  [ratio to graph {sweep / lengths.via_graph if lengths.via_graph else float('nan'):.4f}]\n"
        )
        fh.write(f"\njunctions: {len(junctions)}\n")
        for k, j in enumerate(junctions):
            fh.write(
                f"  {k}: at ({j.position[0]:.6g}, {j.position[1]:.6g}), {j.n_branches} branches, "
                "angles " + " ".join(f"{a:.1f}" for a in j.angles) + "\n"
            )
        fh.write(f"\ntotal wall time: {wall:.2f}s\n")


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args) -> int:
    terminals = load_terminals(args.terminals)
    sol = solve_exact(terminals.points)
    mst = euclidean_mst_length(terminals.points)
    n = sol.topology.n_terminals
    print(f"terminals: {n}")
    for k, (x, y) in enumerate(terminals.points):
        print(f"  t{k}: ({x:.12g}, {y:.12g})")
    print(f"exact network length: {sol.length:.12g}")
    print(f"euclidean mst length: {mst:.12g}  (ratio {sol.length / mst:.6f})")
    print(f"fixed point sweeps: {sol.sweeps}")
    names = [f"t{k}" for k in range(n)] + [f"s{k}" for k in range(sol.topology.n_steiner)]
    print("edges:")
    for a, b in sol.topology.edges:
        pa, pb = sol.vertex_position(a), sol.vertex_position(b)
        length = float(np.hypot(*(pb - pa)))
        tag = "  (collapsed)" if length < 1e-12 else ""
        print(f"  {names[a]} -- {names[b]}  length {length:.12g}{tag}")
    for k in range(sol.topology.n_steiner):
        x, y = sol.steiner_points[k]
        state = "collapsed onto a neighbor" if sol.collapsed[k] else "interior"
        print(f"branch point s{k}: ({x:.12g}, {y:.12g})  [{state}]")
        if not sol.collapsed[k] and sol.angles[k]:
            print("  edge angles_deg: " + " ".join(f"{a:.4f}" for a in sol.angles[k]))
    if args.out:
        segs = [np.vstack([p, q]) for p, q in sol.edge_segments()]
        labels = [f"edge {names[a]} -- {names[b]}" for a, b in sol.topology.edges]
        write_polylines_csv(args.out, segs, labels=labels)
        print(f"edge list written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# diagnose


def cmd_diagnose(args) -> int:
    run = args.rundir
    params_path = os.path.join(run, "params.txt")
    if not os.path.isfile(params_path):
        raise ValueError(f"{run}: not a run directory (missing params.txt)")
    params = read_config(params_path)
    phi = read_field_csv(os.path.join(run, "phi_final.csv"))
    u_stored = read_field_csv(os.path.join(run, "u_final.csv"))
    terminals = load_terminals(os.path.join(run, "terminals.csv"))
    eps_min = params["eps_min"]
    tau = params["tau"]
    g = phi.grid
    threads = args.threads if args.threads is not None else int(params.get("threads", 1))
    directions = args.directions if args.directions is not None else int(params.get("directions", 120))

    ok = True
    lhs, rhs, slack = p_diagnostic(phi, MmParams(eps=eps_min))
    tol = -5.0 * g.h
    good = slack >= tol
    ok = ok and good
    print(
        f"pointwise energy bound: worst slack {slack:.6g} vs tolerance {tol:.6g} "
        f"-> {'OK' if good else 'VIOLATED'}"
    )

    nodes, _ = snap_terminals(g, terminals)
    res = fast_march(phi, nodes[terminals.source_index])
    dev = float(np.max(np.abs(res.u.values - u_stored.values)))
    print(f"arrival field re-march deviation: {dev:.3g}")

    extracted = extract_set(res.u, tau, terminals)
    thin = skeleton_set(extracted)
    print(
        f"extracted set at tau={tau:.6g}: {extracted.n_cells} cells, "
        f"{extracted.n_components} component(s), connected = {extracted.connected}"
    )
    via_graph = geodesic_union_length(res, terminals)
    print(f"geodesic graph length: {via_graph:.9g}")

    factors = [float(s) for s in args.radii.split(",") if s.strip()]
    last = None
    for fac in factors:
        radius = fac * g.h
        val = i_lambda(
            thin, radius, n_directions=directions, threads=threads
        )
        last = val
        print(f"directional sweep length (radius {fac:g}h = {radius:.6g}): {val:.9g}")
    if via_graph > 0 and last is not None:
        ratio = last / via_graph
        inside = 0.5 < ratio < 1.6
        print(
            f"sweep/graph ratio at largest radius: {ratio:.4f} "
            f"({'inside' if inside else 'OUTSIDE'} the plausible band (0.5, 1.6))"
        )
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="steinerpf",
        description="phase-field approximation of shortest connecting networks",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run the continuation solver")
    ps.add_argument("terminals", help="CSV of terminal points (optional '# source <k>' first line)")
    ps.add_argument("--out", default="steinerpf_out", help="output directory (default steinerpf_out)")
    ps.add_argument("--grid", type=int, default=None, help="nodes along the longer axis (default 129)")
    ps.add_argument("--h", type=float, default=None, help="grid spacing (alternative to --grid)")
    ps.add_argument("--margin", type=float, default=None,
                    help="domain margin around the terminals (default quarter diameter)")
    ps.add_argument("--eps0", type=float, default=None, help="starting relaxation width")
    ps.add_argument("--eps-ratio", dest="eps_ratio", type=float, default=None,
                    help="geometric decrease factor (default 0.7)")
    ps.add_argument("--eps-min", dest="eps_min", type=float, default=None,
                    help="final relaxation width (default 6h)")
    ps.add_argument("--weight-rule", dest="weight_rule", default=None,
                    help="connectivity weight rule: inv_sqrt_eps or custom:<value>")
    ps.add_argument("--preg", choices=["off", "on"], default=None,
                    help="steep-gradient regularizer (default off)")
    ps.add_argument("--tau", type=float, default=None,
                    help="extraction threshold (default: max terminal arrival + 3*h*eps_min)")
    ps.add_argument("--snapshots", nargs="?", const=1, type=int, default=None, metavar="K",
                    help="write the phase field every K stages (bare flag: every stage)")
    ps.add_argument("--directions", type=int, default=None,
                    help="directions for the sweep diagnostic (default 120)")
    ps.add_argument("--threads", type=int, default=None, help="threads for the sweep loop")
    ps.add_argument("--config", default=None, help="key=value config file (flags override)")
    ps.set_defaults(func=cmd_solve)

    po = sub.add_parser("oracle", help="exact reference for 2..5 terminals")
    po.add_argument("terminals", help="CSV of terminal points")
    po.add_argument("--out", default=None, help="write the edge list as a polyline CSV")
    po.set_defaults(func=cmd_oracle)

    pd = sub.add_parser("diagnose", help="post-hoc checks on a run directory")
    pd.add_argument("rundir", help="directory produced by solve")
    pd.add_argument("--radii", default="4,8,16", help="sweep radii as multiples of h (default 4,8,16)")
    pd.add_argument("--directions", type=int, default=None, help="directions for the sweep")
    pd.add_argument("--threads", type=int, default=None, help="threads for the sweep loop")
    pd.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
