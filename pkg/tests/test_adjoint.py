import numpy as np
import numpy.testing as npt
import pytest

from helpers import central_difference, random_admissible, random_bump
from steinerpf.eikonal import adjoint_gradient, distance_at, fast_march
from steinerpf.grid import Grid2D, ScalarField


def march_setup(seed, n=17, eps=0.1):
    rng = np.random.default_rng(seed)
    g = Grid2D(nx=n, ny=n, h=1.0 / (n - 1))
    phi = random_admissible(g, eps, rng, lo=0.2, hi=1.0)
    src = (int(rng.integers(2, n - 2)), int(rng.integers(2, n - 2)))
    targets = []
    while len(targets) < 3:
        t = (int(rng.integers(2, n - 2)), int(rng.integers(2, n - 2)))
        if t != src and t not in targets:
            targets.append(t)
    return rng, g, phi, src, targets


@pytest.mark.parametrize("seed", range(6))
def test_adjoint_matches_central_differences(seed):
    """Directional derivative of the summed arrivals, bumps kept off the
    recorded shock nodes (min ties are genuine kinks)."""
    rng, g, phi, src, targets = march_setup(seed)
    res = fast_march(phi, src)
    grad = adjoint_gradient(res, phi, [(t, 1.0) for t in targets])
    shock = res.tape.shock.reshape(g.shape)
    checked = 0
    for _ in range(4):
        d = random_bump(g, rng)
        d[shock] = 0.0

        def summed(t):
            r = fast_march(ScalarField(g, phi.values + t * d), src)
            return float(np.sum(distance_at(r, targets)))

        fd = central_difference(summed, 1e-6)
        an = float(np.sum(grad.values * d))
        if abs(fd) < 1e-12:
            continue
        npt.assert_allclose(an, fd, rtol=1e-3)
        checked += 1
    assert checked >= 3


@pytest.mark.parametrize("seed", range(10))
def test_euler_identity(seed):
    # <dU/dphi, phi> = U for U = sum w_k u(x_k): exact 1-homogeneity
    rng, g, phi, src, targets = march_setup(seed)
    w = rng.uniform(0.5, 2.0, size=len(targets))
    res = fast_march(phi, src)
    seeds = [(t, wk) for t, wk in zip(targets, w)]
    grad = adjoint_gradient(res, phi, seeds)
    lhs = float(np.sum(grad.values * phi.values))
    rhs = float(np.sum(w * distance_at(res, targets)))
    npt.assert_allclose(lhs, rhs, rtol=1e-6)


def test_gradient_nonnegative_and_supported_upwind(seed=4):
    # arrivals only grow when the metric grows, and nothing frozen after
    # the last target can influence it
    _, g, phi, src, targets = march_setup(seed)
    res = fast_march(phi, src)
    grad = adjoint_gradient(res, phi, [(t, 1.0) for t in targets])
    assert grad.values.min() >= 0.0
    u_max = float(np.max(distance_at(res, targets)))
    late = res.u.values > u_max
    assert np.all(grad.values[late] == 0.0)
    assert grad.values.max() > 0.0


def test_seed_weights_are_linear(seed=8):
    _, g, phi, src, targets = march_setup(seed)
    res = fast_march(phi, src)
    g1 = adjoint_gradient(res, phi, [(targets[0], 1.0)])
    g2 = adjoint_gradient(res, phi, [(targets[1], 1.0)])
    both = adjoint_gradient(res, phi, [(targets[0], 2.0), (targets[1], 3.0)])
    npt.assert_allclose(both.values, 2.0 * g1.values + 3.0 * g2.values, rtol=1e-12, atol=1e-14)
