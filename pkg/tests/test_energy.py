import numpy as np
import numpy.testing as npt
import pytest

from helpers import central_difference, random_admissible, random_bump
from steinerpf.energy import MmParams, mm_gradient, mm_terms, mm_value, p_diagnostic
from steinerpf.grid import Grid2D, ScalarField, boundary_mask


def test_params_validation():
    with pytest.raises(ValueError):
        MmParams(eps=0.0)
    with pytest.raises(ValueError):
        MmParams(eps=1.0)
    with pytest.raises(ValueError):
        MmParams(eps=0.1, p_reg=True, p_exponent=2.0)
    assert MmParams(eps=0.1).reg_coeff == 0.0
    npt.assert_allclose(MmParams(eps=0.1, p_reg=True).reg_coeff, 0.1**10)
    assert MmParams(eps=0.1, p_reg=True, p_reg_coeff=1e-3).reg_coeff == 1e-3


def test_energy_of_flat_field_is_zero():
    g = Grid2D(nx=17, ny=17, h=1.0 / 16)
    one = ScalarField.full(g, 1.0)
    assert mm_value(one, MmParams(eps=0.05)) == 0.0


def test_well_term_on_constant_field():
    # phi = c has no gradient: energy = area * (1-c)^2 / (4 eps).
    # A constant field is not admissible (boundary != 1) but the energy
    # is defined for any nodal field.
    g = Grid2D(nx=21, ny=11, h=0.1)
    eps = 0.07
    c = 0.4
    f = ScalarField.full(g, c)
    well, dirichlet, reg = mm_terms(f, MmParams(eps=eps))
    lx, ly = g.extent
    npt.assert_allclose(well, lx * ly * (1 - c) ** 2 / (4 * eps), rtol=1e-12)
    assert dirichlet == 0.0 and reg == 0.0


def test_dirichlet_term_on_linear_ramp():
    g = Grid2D(nx=31, ny=21, h=0.05)
    eps = 0.1
    f = ScalarField.from_function(g, lambda X, Y: 0.5 + 0.2 * X + 0.1 * Y)
    well, dirichlet, _ = mm_terms(f, MmParams(eps=eps))
    lx, ly = g.extent
    npt.assert_allclose(dirichlet, eps * (0.2**2 + 0.1**2) * lx * ly, rtol=1e-12)


def test_regularizer_term_value():
    g = Grid2D(nx=11, ny=11, h=0.1)
    f = ScalarField.from_function(g, lambda X, Y: 0.5 + 0.3 * X)
    p = MmParams(eps=0.1, p_reg=True, p_exponent=4.0, p_reg_coeff=2.0)
    well, dirichlet, reg = mm_terms(f, p)
    lx, ly = g.extent
    # |grad|^2 = 0.09 everywhere, so the p-term is coeff * 0.09^2 * area
    npt.assert_allclose(reg, 2.0 * 0.09**2 * lx * ly, rtol=1e-12)
    assert mm_value(f, p) == pytest.approx(well + dirichlet + reg)


@pytest.mark.parametrize("p_reg", [False, True])
def test_gradient_matches_central_differences(p_reg):
    """Directional derivatives of mm_value against the assembled gradient."""
    rng = np.random.default_rng(42)
    g = Grid2D(nx=17, ny=17, h=1.0 / 16)
    eps = 0.08
    params = MmParams(eps=eps, p_reg=p_reg, p_reg_coeff=1e-4 if p_reg else None)
    for _ in range(5):
        phi = random_admissible(g, eps, rng)
        grad = mm_gradient(phi, params)
        for _ in range(4):
            d = random_bump(g, rng)
            t0 = 1e-6
            fd = central_difference(
                lambda t: mm_value(ScalarField(g, phi.values + t * d), params), t0
            )
            an = float(np.sum(grad.values * d))
            npt.assert_allclose(an, fd, rtol=1e-5, atol=1e-12)


def test_gradient_zero_on_boundary_ring():
    rng = np.random.default_rng(3)
    g = Grid2D(nx=13, ny=9, h=0.1)
    phi = random_admissible(g, 0.1, rng)
    grad = mm_gradient(phi, MmParams(eps=0.1))
    assert np.all(grad.values[boundary_mask(g)] == 0.0)


def test_p_diagnostic_on_resolved_transition():
    # 1-D tube profile phi = 1 - (1-eps) exp(-|y|/(2 eps)): the continuum
    # densities satisfy the bound with equality in the well direction, so a
    # resolved discretization keeps the slack tiny.
    eps = 0.1
    g = Grid2D(nx=33, ny=65, h=1.0 / 64, origin=(0.0, -0.5))
    phi = ScalarField.from_function(
        g, lambda X, Y: 1.0 - (1.0 - eps) * np.exp(-np.abs(Y) / (2.0 * eps))
    )
    lhs, rhs, slack = p_diagnostic(phi, MmParams(eps=eps))
    assert lhs.values.shape == g.shape and rhs.values.shape == g.shape
    assert slack >= -5.0 * g.h
    npt.assert_allclose(slack, float((lhs.values - rhs.values).min()))


def test_p_diagnostic_flags_inconsistent_field():
    # an unresolved one-cell kink (low neighbors around a node still at 1)
    # drives |grad P| past the energy density by much more than 5h
    g = Grid2D(nx=33, ny=33, h=1.0 / 32)
    v = np.ones(g.shape)
    v[16, 15] = 0.35
    v[16, 17] = 0.65
    _, _, slack = p_diagnostic(ScalarField(g, v), MmParams(eps=0.05))
    assert slack < -5.0 * g.h
