import numpy as np
import numpy.testing as npt
import pytest

from steinerpf.eikonal import fast_march
from steinerpf.extraction import (
    ExtractedSet,
    default_threshold,
    estimate_length,
    extract_set,
    geodesic_union_length,
    i_lambda,
    junction_angles,
    skeleton_length,
    skeleton_set,
    smoothed_polyline_length,
)
from steinerpf.grid import Grid2D, ScalarField, TerminalSet

FOUR_OVER_PI = 4.0 / np.pi


def unit_grid(n=129):
    return Grid2D(nx=n, ny=n, h=1.0 / (n - 1))


def tube_mask(g, segments, width):
    """Union of stadium-shaped tubes around the given (p, q) segments."""
    X, Y = g.meshgrid()
    m = np.zeros(g.shape, dtype=bool)
    for p, q in segments:
        p, q = np.asarray(p, float), np.asarray(q, float)
        d = q - p
        L2 = float(d @ d)
        t = np.clip(((X - p[0]) * d[0] + (Y - p[1]) * d[1]) / L2, 0.0, 1.0)
        m |= np.hypot(X - (p[0] + t * d[0]), Y - (p[1] + t * d[1])) <= width
    return m


def as_extracted(g, mask):
    return ExtractedSet(
        grid=g, mask=mask, threshold=1.0, connected=True, n_components=1, terminal_coverage=[]
    )


# ---------------------------------------------------------------------------
# sublevel extraction


def test_extract_monotone_in_threshold():
    g = unit_grid(33)
    res = fast_march(ScalarField.full(g, 1.0), (16, 16))
    small = extract_set(res.u, 0.1)
    big = extract_set(res.u, 0.3)
    assert small.n_cells < big.n_cells
    assert np.all(big.mask[small.mask])
    assert small.connected and big.connected
    with pytest.raises(ValueError):
        extract_set(res.u, 0.0)


def test_extract_reports_components_and_coverage():
    g = unit_grid(33)
    u = ScalarField.from_function(
        g, lambda X, Y: np.minimum(np.hypot(X - 0.2, Y - 0.2), np.hypot(X - 0.8, Y - 0.8))
    )
    t = TerminalSet(np.array([[0.2, 0.2], [0.8, 0.8], [0.5, 0.9]]))
    ex = extract_set(u, 0.1, t)
    assert ex.n_components == 2
    assert not ex.connected
    covered = [ok for ok, _ in ex.terminal_coverage]
    assert covered == [True, True, False]
    dists = [d for _, d in ex.terminal_coverage]
    assert dists[2] > 2.0 * g.h
    assert ex.cell_indices().shape == (ex.n_cells, 2)


def test_default_threshold_reaches_every_terminal():
    g = unit_grid(65)
    t = TerminalSet(np.array([[0.2, 0.3], [0.7, 0.8], [0.9, 0.1]]))
    res = fast_march(ScalarField.full(g, 1.0), (13, 19))
    eps_min = 2.0 * g.h
    tau = default_threshold(res, t, eps_min)
    ex = extract_set(res.u, tau, t)
    assert all(ok for ok, _ in ex.terminal_coverage)


# ---------------------------------------------------------------------------
# length measurement


def test_smoothed_polyline_length_on_straight_line():
    t = np.linspace(0.0, 1.0, 200)
    pts = np.column_stack([t * 3.0, t * 4.0])  # length 5
    npt.assert_allclose(smoothed_polyline_length(pts), 5.0, rtol=1e-6)
    assert smoothed_polyline_length(pts[:1]) == 0.0


def test_smoothed_polyline_length_flattens_staircase():
    # a digitized diagonal: raw chain length sqrt(2) per cell pair, but the
    # smoothed chord length should be close to the true diagonal
    n = 64
    steps = [(1, 0), (0, 1)] * n
    pts = np.cumsum(np.vstack([[0, 0], steps]), axis=0).astype(float)
    true = np.hypot(n, n)
    est = smoothed_polyline_length(pts)
    assert abs(est - true) / true < 0.08


def test_skeleton_length_of_synthetic_tube():
    g = unit_grid(129)
    seg = [((0.1, 0.2), (0.9, 0.75))]
    ex = as_extracted(g, tube_mask(g, seg, 0.02))
    true = float(np.hypot(0.8, 0.55))
    keep = np.array([seg[0][0], seg[0][1]])
    est = skeleton_length(ex, keep_xy=keep)
    assert abs(est - true) / true < 0.06


def test_skeleton_set_is_thin_subset():
    g = unit_grid(65)
    ex = as_extracted(g, tube_mask(g, [((0.1, 0.5), (0.9, 0.5))], 0.05))
    thin = skeleton_set(ex)
    assert thin.n_cells < ex.n_cells
    assert np.all(ex.mask[thin.mask])


def test_geodesic_union_length_straight_channel():
    g = unit_grid(65)
    t = TerminalSet(np.array([[0.125, 0.5], [0.875, 0.5]]))
    res = fast_march(ScalarField.full(g, 1.0), (8, 32))
    est = geodesic_union_length(res, t)
    npt.assert_allclose(est, 0.75, rtol=0.05)


def test_estimate_length_bundle():
    g = unit_grid(65)
    t = TerminalSet(np.array([[0.125, 0.5], [0.875, 0.5]]))
    res = fast_march(ScalarField.full(g, 1.0), (8, 32))
    ex = extract_set(res.u, default_threshold(res, t, 2.0 * g.h), t)
    est = estimate_length(ex, res, t, final_energy=1.0)
    assert est.via_graph > 0 and est.via_skeleton > 0 and est.via_energy > 0
    npt.assert_allclose(est.via_graph, 0.75, rtol=0.05)


# ---------------------------------------------------------------------------
# junction geometry


def test_junctions_ideal_y():
    g = unit_grid(129)
    c = (0.5, 1.0 / (2.0 * np.sqrt(3.0)))
    terms = [(0.02, 0.02), (0.98, 0.02), (0.5, 0.89)]
    ex = as_extracted(g, tube_mask(g, [(c, p) for p in terms], 0.012))
    js = junction_angles(ex, keep_xy=np.asarray(terms, float))
    assert len(js) == 1
    j = js[0]
    assert j.n_branches == 3
    npt.assert_allclose(j.position, c, atol=0.03)
    npt.assert_allclose(sorted(j.angles), [120.0] * 3, atol=6.0)


def test_junctions_absent_on_paths():
    g = unit_grid(129)
    straight = as_extracted(g, tube_mask(g, [((0.05, 0.3), (0.95, 0.72))], 0.012))
    assert junction_angles(straight, keep_xy=np.array([[0.05, 0.3], [0.95, 0.72]])) == []
    elbow = as_extracted(
        g, tube_mask(g, [((0.1, 0.1), (0.1, 0.8)), ((0.1, 0.8), (0.8, 0.8))], 0.012)
    )
    assert junction_angles(elbow, keep_xy=np.array([[0.1, 0.1], [0.8, 0.8]])) == []


def test_junctions_dogleg_branch_uses_far_anchor():
    # one leg bends on the way out: the chord to the far end keeps the
    # branch direction stable
    g = unit_grid(129)
    c = (0.5, 1.0 / (2.0 * np.sqrt(3.0)))
    terms = [(0.02, 0.02), (0.98, 0.02), (0.5, 0.89)]
    segs = [(c, terms[1]), (c, terms[2]), (c, (0.25, 0.22)), ((0.25, 0.22), terms[0])]
    ex = as_extracted(g, tube_mask(g, segs, 0.012))
    js = junction_angles(ex, keep_xy=np.asarray(terms, float))
    assert len(js) == 1
    assert js[0].n_branches == 3


def test_junctions_cross():
    g = unit_grid(129)
    segs = [((0.5, 0.05), (0.5, 0.95)), ((0.05, 0.5), (0.95, 0.5))]
    keep = np.array([[0.5, 0.05], [0.5, 0.95], [0.05, 0.5], [0.95, 0.5]])
    ex = as_extracted(g, tube_mask(g, segs, 0.012))
    js = junction_angles(ex, keep_xy=keep)
    assert len(js) == 1
    assert js[0].n_branches == 4
    npt.assert_allclose(sorted(js[0].angles), [90, 90, 90, 90, 180, 180], atol=4.0)


# ---------------------------------------------------------------------------
# directional sweep


def test_i_lambda_unit_segment():
    g = Grid2D(nx=257, ny=257, h=1.5 / 256, origin=(-0.25, -0.25))
    ex = as_extracted(g, tube_mask(g, [((0.0, 0.5), (1.0, 0.5))], 0.5 * g.h))
    val = i_lambda(ex, 16.0 * g.h, n_directions=90)
    npt.assert_allclose(val, FOUR_OVER_PI, rtol=0.02)


def test_i_lambda_rotation_by_sampled_angle():
    # rotating the cell set by a right angle (one of the 36 sampled sweep
    # directions) only permutes which direction sees which profile
    g = Grid2D(nx=193, ny=193, h=2.0 / 192, origin=(-1.0, -1.0))
    lam = 12.0 * g.h
    mask = tube_mask(g, [((-0.5, -0.2), (0.5, 0.35))], 0.5 * g.h)
    base = i_lambda(as_extracted(g, mask), lam, 36)
    rotated = i_lambda(as_extracted(g, np.rot90(mask).copy()), lam, 36)
    npt.assert_allclose(rotated, base, rtol=0.02)


@pytest.mark.parametrize("s", [2, 3])
def test_i_lambda_scale_covariance(s):
    # i_lambda(s*set, s*lam) = s * i_lambda(set, lam): the slanted tube
    # keeps the same staircase angle at every scale, so the ratio is clean
    g = Grid2D(nx=257, ny=257, h=3.2 / 256, origin=(-1.6, -1.6))
    lam = 8.0 * g.h
    p = 0.25 * np.array([np.cos(0.6), np.sin(0.6)])
    base = i_lambda(as_extracted(g, tube_mask(g, [(-p, p)], 0.5 * g.h)), lam, 90)
    scaled = i_lambda(as_extracted(g, tube_mask(g, [(-s * p, s * p)], 0.5 * g.h)), s * lam, 90)
    npt.assert_allclose(scaled, s * base, rtol=0.02)


def test_i_lambda_two_parallel_segments():
    # far apart relative to lam, the sweeps add up: 2 * (4/pi) * L
    g = Grid2D(nx=257, ny=257, h=1.5 / 256, origin=(-0.25, -0.25))
    segs = [((0.0, 0.2), (1.0, 0.2)), ((0.0, 0.8), (1.0, 0.8))]
    ex = as_extracted(g, tube_mask(g, segs, 0.5 * g.h))
    val = i_lambda(ex, 16.0 * g.h, n_directions=90)
    npt.assert_allclose(val, 2.0 * FOUR_OVER_PI, rtol=0.02)


def test_i_lambda_validation():
    g = unit_grid(33)
    ex = as_extracted(g, tube_mask(g, [((0.2, 0.5), (0.8, 0.5))], 0.03))
    with pytest.raises(ValueError):
        i_lambda(ex, 0.0)
    with pytest.raises(ValueError):
        i_lambda(ex, 0.1, n_directions=0)
    empty = as_extracted(g, np.zeros(g.shape, dtype=bool))
    with pytest.raises(ValueError):
        i_lambda(empty, 0.1)


def test_i_lambda_threads_match_serial():
    g = unit_grid(65)
    ex = as_extracted(g, tube_mask(g, [((0.1, 0.2), (0.9, 0.8))], 0.02))
    a = i_lambda(ex, 8.0 * g.h, n_directions=24, threads=1)
    b = i_lambda(ex, 8.0 * g.h, n_directions=24, threads=3)
    npt.assert_allclose(a, b, rtol=1e-12)
