import numpy as np
import pytest

from merton2d import GridSpec, PayoffKind, assemble, build_grid, parameter_set
from merton2d.model import expected_relative_jump_size
from merton2d.spatial_operator import (
    Part,
    apply,
    central_first_derivative_weights,
    central_second_derivative_weights,
)


def test_weights_frozen_values():
    # hand-derived from the nonuniform three-point formulas at h=(1,2)
    w1 = central_first_derivative_weights(1.0, 2.0)
    np.testing.assert_allclose(w1.as_tuple(), (-2 / 3, 1 / 2, 1 / 6), rtol=1e-15)
    w2 = central_second_derivative_weights(1.0, 2.0)
    np.testing.assert_allclose(w2.as_tuple(), (2 / 3, -1.0, 1 / 3), rtol=1e-15)
    # uniform mesh h=0.1 reduces to the classical central stencils
    u1 = central_first_derivative_weights(0.1, 0.1)
    np.testing.assert_allclose(u1.as_tuple(), (-5.0, 0.0, 5.0), rtol=1e-13)
    u2 = central_second_derivative_weights(0.1, 0.1)
    np.testing.assert_allclose(u2.as_tuple(), (100.0, -200.0, 100.0), rtol=1e-13)


def test_weights_exact_on_quadratics(rng):
    for _ in range(1000):
        h1, h2 = rng.uniform(0.01, 10.0, 2)
        a, b, c = rng.standard_normal(3)
        x = rng.uniform(-5.0, 5.0)
        f = lambda s: a + b * s + c * s * s
        w1 = central_first_derivative_weights(h1, h2).as_tuple()
        w2 = central_second_derivative_weights(h1, h2).as_tuple()
        vals = (f(x - h1), f(x), f(x + h2))
        d1 = sum(w * v for w, v in zip(w1, vals))
        d2 = sum(w * v for w, v in zip(w2, vals))
        scale1 = max(1e-12, abs(b + 2 * c * x))
        assert abs(d1 - (b + 2 * c * x)) <= 1e-10 * max(scale1, abs(c) * (h1 + h2))
        assert abs(d2 - 2 * c) <= 1e-9 * max(1.0, abs(c))


def test_weights_sum_to_zero(rng):
    for _ in range(50):
        h1, h2 = rng.uniform(0.01, 5.0, 2)
        assert sum(central_first_derivative_weights(h1, h2).as_tuple()) == pytest.approx(0.0, abs=1e-12)
        assert sum(central_second_derivative_weights(h1, h2).as_tuple()) == pytest.approx(0.0, abs=1e-10)


@pytest.fixture(scope="module")
def small_op():
    pset = parameter_set(1)
    grid = build_grid(GridSpec(m=14, payoff_kind=PayoffKind.PUT_ON_MIN,
                               K=pset.option.K, S_max=500.0))
    return pset, grid, assemble(pset.params, grid)


def test_full_operator_on_quadratic_polynomial(small_op, rng):
    """Interior rows of the assembled operator must reproduce the
    convection-diffusion-reaction differential operator exactly on
    polynomials of joint degree <= 2."""
    pset, grid, opset = small_op
    p = pset.params
    k1 = expected_relative_jump_size(p, 1)
    k2 = expected_relative_jump_size(p, 2)
    s1 = grid.nodes1[None, :]
    s2 = grid.nodes2[:, None]
    for _ in range(5):
        a, b, c, d, e, f = rng.standard_normal(6)
        v = a + b * s1 + c * s2 + d * s1**2 + e * s2**2 + f * s1 * s2
        exact = (0.5 * p.sigma1**2 * s1**2 * 2 * d
                 + p.rho * p.sigma1 * p.sigma2 * s1 * s2 * f
                 + 0.5 * p.sigma2**2 * s2**2 * 2 * e
                 + (p.r - p.lam * k1) * s1 * (b + 2 * d * s1 + f * s2)
                 + (p.r - p.lam * k2) * s2 * (c + 2 * e * s2 + f * s1)
                 - (p.r + p.lam) * v)
        got = (opset.a_full_d @ v.ravel()).reshape(v.shape)
        interior = np.zeros_like(v, dtype=bool)
        interior[1:-1, 1:-1] = True
        scale = np.max(np.abs(exact))
        np.testing.assert_allclose(got[interior], exact[interior],
                                   atol=1e-9 * scale, rtol=0)


def test_kronecker_structure(small_op):
    import scipy.sparse as sp
    _, grid, opset = small_op
    I1 = sp.identity(grid.m1 + 1)
    I2 = sp.identity(grid.m2 + 1)
    assert abs(sp.kron(I2, opset.b_dir1) - opset.a_dir1).max() == 0
    assert abs(sp.kron(opset.b_dir2, I1) - opset.a_dir2).max() == 0
    # summation order may differ, so allow roundoff
    diff = opset.a_full_d - (opset.a_dir1 + opset.a_dir2 + opset.a_mixed)
    assert abs(diff).max() < 1e-12


def test_direction_blocks_are_tridiagonal(small_op):
    _, _, opset = small_op
    for block in (opset.b_dir1, opset.b_dir2):
        coo = block.tocoo()
        assert np.all(np.abs(coo.row - coo.col) <= 1)


def test_boundary_rows(small_op):
    _, grid, opset = small_op
    p = parameter_set(1).params
    b1 = opset.b_dir1.toarray()
    # s = 0: direction degenerates, only the reaction part remains
    row0 = np.zeros(grid.m1 + 1)
    row0[0] = -0.5 * (p.r + p.lam)
    np.testing.assert_allclose(b1[0], row0, atol=1e-14)
    # s = S_max: no second-derivative contribution (linear boundary condition),
    # first derivative by backward difference: row touches only the last two nodes
    assert np.all(b1[-1, :-2] == 0)
    lin = grid.nodes1.copy()  # exactly linear function
    k1 = expected_relative_jump_size(p, 1)
    expect = (p.r - p.lam * k1) * grid.nodes1[-1] * 1.0 \
        - 0.5 * (p.r + p.lam) * grid.nodes1[-1]
    assert b1[-1] @ lin == pytest.approx(expect, rel=1e-10)


def test_apply_dispatch_and_validation(small_op, rng):
    _, _, opset = small_op
    v = rng.standard_normal(opset.n)
    np.testing.assert_array_equal(apply(opset, Part.MIXED, v), opset.a_mixed @ v)
    np.testing.assert_array_equal(apply(opset, Part.DIR1, v), opset.a_dir1 @ v)
    np.testing.assert_array_equal(apply(opset, Part.DIR2, v), opset.a_dir2 @ v)
    np.testing.assert_array_equal(apply(opset, Part.FULL_D, v), opset.a_full_d @ v)
    with pytest.raises(ValueError):
        apply(opset, Part.FULL_D, v[:-1])
