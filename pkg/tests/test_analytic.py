import math

import mpmath as mp
import numpy as np
import pytest
from scipy.special import ndtr

from merton2d import OptionSpec, PayoffKind, parameter_set
from merton2d.analytic import (
    bivariate_normal_cdf,
    mc_reference_price,
    put_on_min_value,
    series_term_context,
)
from merton2d.model import ModelParams, expected_relative_jump_size


def mp_bvn(x1: float, x2: float, rho: float) -> float:
    """mpmath quadrature oracle for the bivariate normal CDF."""
    f = lambda t: mp.exp(-(x1 * x1 + x2 * x2 - 2 * x1 * x2 * mp.sin(t))
                         / (2 * mp.cos(t) ** 2))
    val = mp.ncdf(x1) * mp.ncdf(x2) + mp.quad(f, [0, mp.asin(rho)]) / (2 * mp.pi)
    return float(val)


def test_bvn_frozen_median_values():
    # M(0, 0, rho) = 1/4 + arcsin(rho) / (2 pi); rho = 1/2 gives exactly 1/3
    assert bivariate_normal_cdf(0.0, 0.0, 0.5) == pytest.approx(1.0 / 3.0, abs=1e-14)
    for rho in (-0.9, -0.3, 0.2, 0.7, 0.99):
        expect = 0.25 + math.asin(rho) / (2 * math.pi)
        assert bivariate_normal_cdf(0.0, 0.0, rho) == pytest.approx(expect, abs=1e-14)


def test_bvn_against_mpmath_grid():
    xs = (-3.0, -1.0, -0.2, 0.5, 1.7, 3.5)
    rhos = (-0.95, -0.5, 0.3, 0.8, 0.999)
    for rho in rhos:
        for x1 in xs:
            for x2 in xs:
                assert bivariate_normal_cdf(x1, x2, rho) == pytest.approx(
                    mp_bvn(x1, x2, rho), abs=1e-13)


def test_bvn_limits_and_independence():
    assert bivariate_normal_cdf(1.3, np.inf, 0.6) == pytest.approx(ndtr(1.3), abs=1e-14)
    assert bivariate_normal_cdf(-np.inf, 0.0, 0.6) == 0.0
    assert bivariate_normal_cdf(np.inf, np.inf, -0.4) == 1.0
    # rho = 0 factorizes
    assert bivariate_normal_cdf(0.7, -1.1, 0.0) == pytest.approx(
        ndtr(0.7) * ndtr(-1.1), abs=1e-15)


def test_bvn_vectorized_and_domain():
    x = np.linspace(-2, 2, 7)
    out = bivariate_normal_cdf(x, x[::-1], 0.4)
    assert out.shape == (7,)
    for i in range(7):
        assert out[i] == pytest.approx(bivariate_normal_cdf(x[i], x[6 - i], 0.4), abs=1e-15)
    for bad in (1.0, -1.0, 1.5):
        with pytest.raises(ValueError):
            bivariate_normal_cdf(0.0, 0.0, bad)


def one_asset_jump_put(params: ModelParams, K: float, T: float, s: float,
                       asset: int) -> float:
    """Independent 1-D oracle: Poisson mixture of lognormal puts."""
    sigma = params.sigma1 if asset == 1 else params.sigma2
    gamma = params.gamma1 if asset == 1 else params.gamma2
    delta = params.delta1 if asset == 1 else params.delta2
    kappa = expected_relative_jump_size(params, asset)
    lam, r = params.lam, params.r
    total = 0.0
    w = math.exp(-lam * T)
    for n in range(0, 120):
        mean = math.log(s) + (r - 0.5 * sigma**2 - lam * kappa) * T + n * gamma
        var = sigma**2 * T + n * delta**2
        fwd = math.exp(mean + 0.5 * var)
        sd = math.sqrt(var)
        d1 = (math.log(fwd / K) + 0.5 * var) / sd
        total += w * math.exp(-r * T) * (K * ndtr(-(d1 - sd)) - fwd * ndtr(-d1))
        w *= lam * T / (n + 1)
    return total


def test_series_degenerates_to_one_asset_put():
    """With the other asset pushed far out of the money, the put-on-the-min
    collapses to a single-asset jump-diffusion put."""
    ps = parameter_set(1)
    far = 1e8
    for s in (70.0, 100.0, 130.0):
        v = put_on_min_value(ps.params, ps.option, s, far)
        expect = one_asset_jump_put(ps.params, ps.option.K, ps.option.T, s, 1)
        assert v == pytest.approx(expect, abs=2e-8)
        v2 = put_on_min_value(ps.params, ps.option, far, s)
        expect2 = one_asset_jump_put(ps.params, ps.option.K, ps.option.T, s, 2)
        assert v2 == pytest.approx(expect2, abs=2e-8)


def test_series_against_monte_carlo_fast(any_pset):
    opt = OptionSpec(PayoffKind.PUT_ON_MIN, K=any_pset.option.K, T=any_pset.option.T)
    K = opt.K
    v = put_on_min_value(any_pset.params, opt, K, K)
    est, se = mc_reference_price(any_pset.params, opt, K, K, 400_000, seed=7)
    assert abs(v - est) < 4.0 * se


def test_series_bounds_and_monotonicity():
    ps = parameter_set(1)
    disc_k = math.exp(-ps.params.r * ps.option.T) * ps.option.K
    s = np.array([1e-6, 20.0, 60.0, 100.0, 140.0, 400.0])
    v = put_on_min_value(ps.params, ps.option, s, np.full_like(s, 100.0))
    assert np.all(v >= 0) and np.all(v <= disc_k)
    assert np.all(np.diff(v) <= 1e-12)  # decreasing in the spot
    # deep in the money approaches the discounted strike
    assert v[0] == pytest.approx(disc_k, rel=1e-6)


def test_series_validation_and_truncation():
    ps = parameter_set(3)  # lam*T = 8, slow Poisson tail
    with pytest.raises(RuntimeError):
        put_on_min_value(ps.params, ps.option, 40.0, 40.0, max_terms=3)
    avg_opt = OptionSpec(PayoffKind.PUT_ON_AVERAGE, K=40.0, T=1.0)
    with pytest.raises(ValueError):
        put_on_min_value(ps.params, avg_opt, 40.0, 40.0)
    with pytest.raises(ValueError):
        put_on_min_value(ps.params, ps.option, -1.0, 40.0)
    with pytest.raises(ValueError):
        put_on_min_value(ps.params, ps.option, 40.0, 40.0, tol=0.0)


def test_series_term_context_invariants(any_pset):
    p = any_pset.params
    opt = OptionSpec(PayoffKind.PUT_ON_MIN, K=any_pset.option.K, T=any_pset.option.T)
    T = opt.T
    for n in range(6):
        ctx = series_term_context(p, opt, 90.0, 110.0, n)
        assert ctx.sigma_sq == pytest.approx(
            p.sigma1**2 - 2 * p.rho * p.sigma1 * p.sigma2 + p.sigma2**2)
        assert ctx.delta_sq == pytest.approx(
            p.delta1**2 - 2 * p.rho_hat * p.delta1 * p.delta2 + p.delta2**2)
        for rho in (ctx.rho1, ctx.rho2, ctx.rho3):
            assert abs(rho) < 1.0
        v1 = math.sqrt(p.sigma1**2 + n * p.delta1**2 / T)
        v2 = math.sqrt(p.sigma2**2 + n * p.delta2**2 / T)
        v = math.sqrt(ctx.sigma_sq + n * ctx.delta_sq / T)
        assert ctx.d1 == pytest.approx(-ctx.b1 - math.sqrt(T) * v1, abs=1e-12)
        assert ctx.d2 == pytest.approx(-ctx.b2 - math.sqrt(T) * v2, abs=1e-12)
        assert ctx.d22 == pytest.approx(-ctx.d11 - math.sqrt(T) * v, abs=1e-12)
        # correlation triangle: rho3 is the normalized covariance
        cov = p.rho * p.sigma1 * p.sigma2 + n * p.rho_hat * p.delta1 * p.delta2 / T
        assert ctx.rho3 == pytest.approx(cov / (v1 * v2), abs=1e-14)


def test_mc_determinism_and_validation():
    ps = parameter_set(1)
    a = mc_reference_price(ps.params, ps.option, 100.0, 100.0, 50_000, seed=3)
    b = mc_reference_price(ps.params, ps.option, 100.0, 100.0, 50_000, seed=3)
    assert a == b
    c = mc_reference_price(ps.params, ps.option, 100.0, 100.0, 50_000, seed=4)
    assert a != c
    assert a[1] > 0
    with pytest.raises(ValueError):
        mc_reference_price(ps.params, ps.option, 100.0, 100.0, 100, seed=1)


def test_mc_prices_average_payoff():
    # the Monte Carlo oracle must honor the payoff kind
    ps = parameter_set(1, PayoffKind.PUT_ON_AVERAGE)
    est, se = mc_reference_price(ps.params, ps.option, 100.0, 100.0, 200_000, seed=11)
    vmin, _ = mc_reference_price(
        parameter_set(1).params, parameter_set(1).option, 100.0, 100.0,
        200_000, seed=11)
    # average put is worth less than min put at the same spot
    assert est < vmin
    assert est > 0
