import math

import numpy as np
import pytest
import scipy.sparse as sp

from merton2d import GridSpec, PayoffKind, build_grid, parameter_set
from merton2d.jump_operator import (
    JumpOperator,
    LogGrid,
    ToeplitzKernel,
    _Corr1D,
    _edge_kernel,
    _required_power_of_two,
    blocktoeplitz_matvec,
    build_kernel,
    build_log_grid,
    build_transfer_maps,
)


def dense_jump_matrix(kernel: ToeplitzKernel) -> np.ndarray:
    """Independent dense oracle: A[(k + l*M1), (i + j*M1)] = lam * F[i-k, j-l]."""
    M1, M2 = kernel.M1, kernel.M2
    A = np.zeros((M1 * M2, M1 * M2))
    for l in range(M2):
        for k in range(M1):
            for j in range(M2):
                for i in range(M1):
                    A[k + l * M1, i + j * M1] = kernel.lam * kernel.entry(i - k, j - l)
    return A


def test_blocktoeplitz_matvec_matches_dense_oracle(rng):
    pset = parameter_set(2)
    for M1 in (2, 4, 8):
        for M2 in (2, 4, 8):
            lg = LogGrid(x_max=math.log(300.0), M1=M1, M2=M2)
            kernel = build_kernel(pset.params, lg)
            A = dense_jump_matrix(kernel)
            for _ in range(3):
                v = rng.standard_normal(M1 * M2)
                got = blocktoeplitz_matvec(kernel, v)
                ref = A @ v
                np.testing.assert_allclose(got, ref, rtol=0,
                                           atol=1e-13 * max(1.0, np.abs(ref).max()))


def test_correlation_orientation_not_convolution(rng):
    """An asymmetric kernel distinguishes F[i-k] (correlation) from F[k-i]
    (convolution); the dense layout pins the former."""
    M1 = M2 = 4
    vals = rng.uniform(0.1, 1.0, size=(2 * M2 - 1, 2 * M1 - 1))
    kernel = ToeplitzKernel(values=vals, c_lo=-M1 + 1, d_lo=-M2 + 1,
                            M1=M1, M2=M2, lam=1.0)
    v = rng.standard_normal(M1 * M2)
    got = blocktoeplitz_matvec(kernel, v)
    ref = dense_jump_matrix(kernel) @ v
    np.testing.assert_allclose(got, ref, atol=1e-12)
    # the convolution-oriented product must differ for this kernel
    conv = dense_jump_matrix(ToeplitzKernel(values=vals[::-1, ::-1],
                                            c_lo=-M1 + 1, d_lo=-M2 + 1,
                                            M1=M1, M2=M2, lam=1.0)) @ v
    assert np.max(np.abs(conv - ref)) > 1e-6


def test_log_grid_size_frozen_example():
    # X_max = ln 500, smallest log mesh 0.02: need 2*X_max/M < 0.02,
    # i.e. M > 621.5, so M = 1024
    assert _required_power_of_two(math.log(500.0), 0.02, 2**16) == 1024
    # strictness: dx equal to the mesh width is not allowed
    assert _required_power_of_two(1.0, 0.25, 2**16) == 16
    with pytest.raises(ValueError):
        _required_power_of_two(10.0, 1e-9, 2**10)


def test_build_log_grid_resolves_price_grid():
    pset = parameter_set(1)
    grid = build_grid(GridSpec(m=30, payoff_kind=PayoffKind.PUT_ON_MIN,
                               K=pset.option.K, S_max=500.0))
    lg = build_log_grid(grid, 500.0)
    min_mesh = np.min(np.diff(np.log(grid.nodes1[1:])))
    assert lg.dx1 < min_mesh
    assert lg.M1 & (lg.M1 - 1) == 0  # power of two
    assert lg.nodes(1)[-1] == pytest.approx(math.log(500.0))


def test_kernel_mass_and_truncation(any_pset):
    lg = LogGrid(x_max=math.log(500.0), M1=512, M2=512)
    full = build_kernel(any_pset.params, lg, support_sigmas=None)
    assert full.values.shape == (2 * 512 - 1, 2 * 512 - 1)
    assert full.values.sum() == pytest.approx(1.0, abs=1e-8)
    trunc = build_kernel(any_pset.params, lg, support_sigmas=10.0)
    assert trunc.values.size < full.values.size
    assert abs(trunc.values.sum() - full.values.sum()) < 1e-15
    # the truncated kernel embeds into the same offsets as the full one
    np.testing.assert_allclose(trunc.full_values(), full.full_values(), atol=1e-22)


def test_truncated_matvec_matches_full(rng):
    pset = parameter_set(3)
    lg = LogGrid(x_max=math.log(200.0), M1=64, M2=32)
    full = build_kernel(pset.params, lg, support_sigmas=None)
    trunc = build_kernel(pset.params, lg, support_sigmas=10.0)
    v = rng.standard_normal(64 * 32)
    a = blocktoeplitz_matvec(full, v)
    b = blocktoeplitz_matvec(trunc, v)
    np.testing.assert_allclose(a, b, atol=1e-13 * np.abs(a).max())


@pytest.fixture(scope="module")
def small_setup():
    pset = parameter_set(1)
    grid = build_grid(GridSpec(m=12, payoff_kind=PayoffKind.PUT_ON_MIN,
                               K=pset.option.K, S_max=500.0))
    lg = LogGrid(x_max=math.log(500.0), M1=64, M2=64)
    return pset, grid, lg


def unwindowed_apply(params, grid, lg, v):
    """Reference jump application without windowing: full transfer matrices,
    full-kernel circulant product, dense 1-D edge correlations with the
    boundary line clamped to its end values past the log grid."""
    kernel = build_kernel(params, lg, support_sigmas=None)
    maps = build_transfer_maps(grid, lg)
    m1, m2 = grid.m1, grid.m2
    v2 = v.reshape(m2 + 1, m1 + 1)
    out = np.zeros_like(v2)

    vbar = maps.to_log @ v
    jbar = blocktoeplitz_matvec(kernel, vbar) / params.lam
    interior = (maps.from_log @ jbar).reshape(m2 + 1, m1 + 1)
    out[1:, 1:] = interior[1:, 1:]

    for direction, (p, q, M, dx, gamma, delta) in {
        1: (maps.p1, maps.q1, lg.M1, lg.dx1, params.gamma1, params.delta1),
        2: (maps.p2, maps.q2, lg.M2, lg.dx2, params.gamma2, params.delta2),
    }.items():
        kern, lo = _edge_kernel(gamma, delta, dx, M, None)
        line = v2[0, :] if direction == 1 else v2[:, 0]
        w = p @ line
        jline = np.zeros(M)
        for k in range(M):
            for off_idx, val in enumerate(kern):
                i = min(max(k + lo + off_idx, 0), M - 1)
                jline[k] += w[i] * val
        back = q @ jline
        if direction == 1:
            out[0, 1:] = back[1:]
        else:
            out[1:, 0] = back[1:]
    out[0, 0] = v2[0, 0]
    return params.lam * out.ravel()


def test_windowed_operator_matches_unwindowed(small_setup, rng):
    pset, grid, lg = small_setup
    op = JumpOperator(pset.params, grid, 500.0, lg=lg, support_sigmas=10.0)
    for _ in range(3):
        v = rng.standard_normal(grid.n_nodes)
        got = op.apply(v)
        ref = unwindowed_apply(pset.params, grid, lg, v)
        np.testing.assert_allclose(got, ref, atol=1e-11 * max(1.0, np.abs(ref).max()))


def test_operator_is_linear(small_setup, rng):
    pset, grid, lg = small_setup
    op = JumpOperator(pset.params, grid, 500.0, lg=lg)
    u = rng.standard_normal(grid.n_nodes)
    v = rng.standard_normal(grid.n_nodes)
    lhs = op.apply(2.0 * u - 3.0 * v)
    rhs = 2.0 * op.apply(u) - 3.0 * op.apply(v)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * max(1.0, np.abs(rhs).max()))


def test_constant_maps_to_lambda_inside(small_setup):
    """For v = 1 the integral is the total density mass, so the operator
    returns about lam at nodes far from the domain truncation."""
    pset, grid, _ = small_setup
    op = JumpOperator(pset.params, grid, 500.0)
    out = op.apply(np.ones(grid.n_nodes)).reshape(grid.m2 + 1, grid.m1 + 1)
    mid = np.searchsorted(grid.nodes1, 100.0)
    assert out[mid, mid] == pytest.approx(pset.params.lam, rel=1e-3)
    assert out[0, 0] == pytest.approx(pset.params.lam)


def test_edge_lines_preserve_constants(small_setup):
    """On the degenerate boundary lines the tail extension restores the full
    marginal density mass, so a constant maps to lam * constant everywhere,
    including the nodes next to s = S_max."""
    pset, grid, _ = small_setup
    op = JumpOperator(pset.params, grid, 500.0)
    out = op.apply(np.ones(grid.n_nodes)).reshape(grid.m2 + 1, grid.m1 + 1)
    np.testing.assert_allclose(out[1:, 0], pset.params.lam, rtol=1e-10)
    np.testing.assert_allclose(out[0, 1:], pset.params.lam, rtol=1e-10)


def test_call_counter(small_setup, rng):
    pset, grid, lg = small_setup
    op = JumpOperator(pset.params, grid, 500.0, lg=lg)
    assert op.calls == 0
    v = rng.standard_normal(grid.n_nodes)
    op.apply(v)
    op.apply(v)
    assert op.calls == 2
    op.reset_calls()
    assert op.calls == 0
    with pytest.raises(ValueError):
        op.apply(v[:-1])


def test_corr1d_matches_direct_sum(rng):
    kern = rng.standard_normal(7)
    k_lo, P, Q = -3, 10, 12
    w = rng.standard_normal(P)
    corr = _Corr1D(kern, k_lo, P, Q)
    got = corr(w)
    ref = np.zeros(Q)
    for q in range(Q):
        for p in range(P):
            t = p - q
            if k_lo <= t <= k_lo + len(kern) - 1:
                ref[q] += w[p] * kern[t - k_lo]
    np.testing.assert_allclose(got, ref, atol=1e-12)
