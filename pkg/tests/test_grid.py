import numpy as np
import numpy.testing as npt
import pytest

from steinerpf.grid import (
    Grid2D,
    ScalarField,
    TerminalSet,
    boundary_mask,
    diff_x,
    diff_x_transpose,
    diff_y,
    diff_y_transpose,
    gradient_sq,
    integrate,
    snap_terminals,
    snap_to_grid,
    trapezoid_weights,
)


def test_grid_basic_geometry():
    g = Grid2D(nx=11, ny=6, h=0.5, origin=(-1.0, 2.0))
    assert g.shape == (6, 11)
    assert g.n_nodes == 66
    npt.assert_allclose(g.extent, (5.0, 2.5))
    npt.assert_allclose(g.diameter, np.hypot(5.0, 2.5))
    npt.assert_allclose(g.node_position(3, 2), (0.5, 3.0))
    assert g.flat_index(3, 2) == 2 * 11 + 3
    npt.assert_allclose(g.xs()[[0, -1]], [-1.0, 4.0])
    npt.assert_allclose(g.ys()[[0, -1]], [2.0, 4.5])
    assert g.contains((4.0, 4.5)) and not g.contains((4.1, 4.5))


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid2D(nx=2, ny=5, h=0.1)
    with pytest.raises(ValueError):
        Grid2D(nx=5, ny=5, h=0.0)


def test_scalar_field_shape_check():
    g = Grid2D(nx=4, ny=3, h=1.0)
    ScalarField(g, np.zeros((3, 4)))
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros((4, 3)))


def test_snap_to_grid_rounds_to_nearest():
    g = Grid2D(nx=11, ny=11, h=0.1)
    assert snap_to_grid(g, (0.34, 0.56)) == (3, 6)
    assert snap_to_grid(g, (0.35001, 0.0)) == (4, 0)
    assert snap_to_grid(g, (1.0, 1.0)) == (10, 10)
    with pytest.raises(ValueError):
        snap_to_grid(g, (1.05, 0.5))


def test_snap_terminals_reports_displacement_and_collisions():
    g = Grid2D(nx=11, ny=11, h=0.1)
    t = TerminalSet(np.array([[0.32, 0.5], [0.71, 0.5]]))
    nodes, disp = snap_terminals(g, t)
    assert nodes == [(3, 5), (7, 5)]
    npt.assert_allclose(disp, [0.02, 0.01], atol=1e-12)
    close = TerminalSet(np.array([[0.50, 0.5], [0.52, 0.5]]))
    with pytest.raises(ValueError, match="same grid node"):
        snap_terminals(g, close)


def test_terminal_set_validation():
    with pytest.raises(ValueError):
        TerminalSet(np.array([[0.0, 0.0]]))
    with pytest.raises(ValueError, match="coincide"):
        TerminalSet(np.array([[0.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        TerminalSet(np.array([[0.0, 0.0], [1.0, 0.0]]), source_index=2)
    t = TerminalSet(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), source_index=1)
    npt.assert_allclose(t.source, [1.0, 0.0])
    npt.assert_array_equal(t.others(), [0, 2])


def test_boundary_mask_ring():
    g = Grid2D(nx=7, ny=5, h=1.0)
    m = boundary_mask(g)
    assert m.sum() == 2 * 7 + 2 * 5 - 4
    assert not m[1:-1, 1:-1].any()


def test_integrate_exact_for_bilinear():
    # trapezoid quadrature integrates a + bx + cy + dxy exactly
    g = Grid2D(nx=13, ny=9, h=0.25, origin=(0.5, -1.0))
    a, b, c, d = 0.7, -1.3, 2.1, 0.9
    f = ScalarField.from_function(g, lambda X, Y: a + b * X + c * Y + d * X * Y)
    lx, ly = g.extent
    x0, y0 = g.origin
    x1, y1 = x0 + lx, y0 + ly
    exact = (
        a * lx * ly
        + b * (x1**2 - x0**2) / 2 * ly
        + c * lx * (y1**2 - y0**2) / 2
        + d * (x1**2 - x0**2) / 2 * (y1**2 - y0**2) / 2
    )
    npt.assert_allclose(integrate(f), exact, rtol=1e-13)


def test_trapezoid_weights_sum_to_area():
    g = Grid2D(nx=6, ny=11, h=0.3)
    lx, ly = g.extent
    npt.assert_allclose(trapezoid_weights(g).sum(), lx * ly, rtol=1e-13)


def test_gradient_sq_constant_on_linear_field():
    g = Grid2D(nx=17, ny=12, h=0.125, origin=(-1.0, 0.0))
    f = ScalarField.from_function(g, lambda X, Y: 0.4 * X - 1.1 * Y + 3.0)
    gs = gradient_sq(f)
    npt.assert_allclose(gs.values, 0.4**2 + 1.1**2, rtol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_difference_transposes_are_exact(seed):
    rng = np.random.default_rng(seed)
    g = Grid2D(nx=9, ny=7, h=0.37)
    u = rng.standard_normal(g.shape)
    v = rng.standard_normal(g.shape)
    lhs = np.sum(diff_x(u, g.h) * v)
    rhs = np.sum(u * diff_x_transpose(v, g.h))
    npt.assert_allclose(lhs, rhs, rtol=1e-12)
    lhs = np.sum(diff_y(u, g.h) * v)
    rhs = np.sum(u * diff_y_transpose(v, g.h))
    npt.assert_allclose(lhs, rhs, rtol=1e-12)
