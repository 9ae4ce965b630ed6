"""Two-asset Merton jump-diffusion model: parameters, jump densities, payoffs.

All quantities are annualized. Asset prices are in currency units, jump
amplitudes y_i are relative (price multipliers), log-jumps eta_i = ln(y_i)
are bivariate normal with mean (gamma1, gamma2) and covariance built from
(delta1, delta2, rho_hat).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "OptionSpec",
    "ParameterSet",
    "PayoffKind",
    "SetId",
    "expected_relative_jump_size",
    "jump_density_lognormal",
    "log_jump_density",
    "payoff",
    "parameter_set",
]


class PayoffKind(enum.Enum):
    PUT_ON_MIN = "min"
    PUT_ON_AVERAGE = "avg"


class SetId(enum.Enum):
    SET1 = 1
    SET2 = 2
    SET3 = 3


@dataclass(frozen=True)
class ModelParams:
    """Market and jump parameters of the two-asset Merton model."""

    sigma1: float
    sigma2: float
    rho: float
    lam: float
    gamma1: float
    gamma2: float
    rho_hat: float
    delta1: float
    delta2: float
    r: float

    def __post_init__(self) -> None:
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("volatilities must be strictly positive")
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise ValueError("log-jump standard deviations must be strictly positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if not abs(self.rho_hat) < 1:
            raise ValueError("|rho_hat| must be < 1")
        if self.lam < 0:
            raise ValueError("jump intensity must be nonnegative")

    @property
    def jump_mean(self) -> np.ndarray:
        return np.array([self.gamma1, self.gamma2])

    @property
    def jump_cov(self) -> np.ndarray:
        c = self.rho_hat * self.delta1 * self.delta2
        return np.array([[self.delta1**2, c], [c, self.delta2**2]])


@dataclass(frozen=True)
class OptionSpec:
    """European rainbow option contract: payoff type, strike and maturity."""

    payoff_kind: PayoffKind
    K: float
    T: float

    def __post_init__(self) -> None:
        if self.K <= 0:
            raise ValueError("strike must be positive")
        if self.T <= 0:
            raise ValueError("maturity must be positive")


@dataclass(frozen=True)
class ParameterSet:
    """One of the three benchmark market/option configurations."""

    id: SetId
    params: ModelParams
    option: OptionSpec
    s_max_put_on_min: float
    s_max_put_on_average: float

    def s_max(self, kind: PayoffKind | None = None) -> float:
        kind = kind if kind is not None else self.option.payoff_kind
        if kind is PayoffKind.PUT_ON_MIN:
            return self.s_max_put_on_min
        return self.s_max_put_on_average


# Benchmark parameter sets (code constants; unit-tested against the published
# literals so docs and code cannot drift).
_SETS = {
    SetId.SET1: dict(
        params=dict(sigma1=0.12, sigma2=0.15, rho=0.30, lam=0.60, gamma1=-0.10,
                    gamma2=0.10, rho_hat=-0.20, delta1=0.17, delta2=0.13, r=0.05),
        K=100.0, T=1.0, s_max_min_mult=5.0, s_max_avg_mult=5.0,
    ),
    SetId.SET2: dict(
        params=dict(sigma1=0.30, sigma2=0.30, rho=0.50, lam=2.0, gamma1=-0.50,
                    gamma2=0.30, rho_hat=-0.60, delta1=0.40, delta2=0.10, r=0.05),
        K=40.0, T=0.5, s_max_min_mult=30.0, s_max_avg_mult=15.0,
    ),
    SetId.SET3: dict(
        params=dict(sigma1=0.20, sigma2=0.30, rho=0.70, lam=8.0, gamma1=-0.05,
                    gamma2=-0.20, rho_hat=0.50, delta1=0.45, delta2=0.06, r=0.05),
        K=40.0, T=1.0, s_max_min_mult=50.0, s_max_avg_mult=25.0,
    ),
}


def parameter_set(set_id: SetId | int, payoff_kind: PayoffKind = PayoffKind.PUT_ON_MIN) -> ParameterSet:
    """Return one of the three benchmark parameter sets."""
    sid = SetId(set_id)
    payoff_kind = PayoffKind(payoff_kind)
    cfg = _SETS[sid]
    K = cfg["K"]
    return ParameterSet(
        id=sid,
        params=ModelParams(**cfg["params"]),
        option=OptionSpec(payoff_kind=payoff_kind, K=K, T=cfg["T"]),
        s_max_put_on_min=cfg["s_max_min_mult"] * K,
        s_max_put_on_average=cfg["s_max_avg_mult"] * K,
    )


def expected_relative_jump_size(params: ModelParams, i: int) -> float:
    """kappa_i = E[e^{Y_i}] - 1 = exp(gamma_i + delta_i^2/2) - 1."""
    if i not in (1, 2):
        raise ValueError("asset index must be 1 or 2")
    gamma = params.gamma1 if i == 1 else params.gamma2
    delta = params.delta1 if i == 1 else params.delta2
    return math.exp(gamma + 0.5 * delta * delta) - 1.0


def log_jump_density(params: ModelParams, eta1, eta2):
    """Bivariate normal density of the log-jump vector at (eta1, eta2).

    Mean (gamma1, gamma2), standard deviations (delta1, delta2),
    correlation rho_hat. Vectorized over eta1, eta2.
    """
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    z1 = (eta1 - params.gamma1) / params.delta1
    z2 = (eta2 - params.gamma2) / params.delta2
    rh = params.rho_hat
    omr2 = 1.0 - rh * rh
    expo = -(z1 * z1 - 2.0 * rh * z1 * z2 + z2 * z2) / (2.0 * omr2)
    norm = 2.0 * math.pi * params.delta1 * params.delta2 * math.sqrt(omr2)
    out = np.exp(expo) / norm
    return out if out.ndim else float(out)


def jump_density_lognormal(params: ModelParams, y1, y2):
    """Bivariate lognormal density f(y1, y2) of the relative jump sizes."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise ValueError("jump amplitudes must be strictly positive")
    # Work in log space and exponentiate once: f(y) = fbar(ln y1, ln y2)/(y1 y2).
    out = log_jump_density(params, np.log(y1), np.log(y2)) / (y1 * y2)
    return out if np.ndim(out) else float(out)


def payoff(option: OptionSpec, s1, s2):
    """Payoff at expiry; vectorized over asset prices."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if option.payoff_kind is PayoffKind.PUT_ON_MIN:
        out = np.maximum(0.0, option.K - np.minimum(s1, s2))
    else:
        out = np.maximum(0.0, option.K - 0.5 * (s1 + s2))
    return out if out.ndim else float(out)
