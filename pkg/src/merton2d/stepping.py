"""Operator-splitting time steppers for the semidiscrete jump-diffusion system.

Seven schemes advance dV/dt = A_D V + A_J V, where A_D is the (stiff, sparse)
convection-diffusion-reaction part and A_J the (dense but FFT-fast) jump part:

* ``CNFE``  Crank-Nicolson in A_D, forward Euler extrapolation of A_J,
* ``CNFI``  Crank-Nicolson with fixed-point iteration on the implicit A_J term,
* ``IETR``  implicit-explicit trapezoidal rule,
* ``CNAB``  Crank-Nicolson with Adams-Bashforth extrapolation of A_J,
* ``MCS``   modified Craig-Sneyd ADI with the jump term treated explicitly
            at both predictor and corrector level,
* ``MCS2``  MCS variant with a single Adams-Bashforth jump evaluation,
* ``SC2A``  two-step ADI scheme with Adams-Bashforth weights on all
            explicitly treated parts.

All schemes treat A_D implicitly only through (block-)tridiagonal or sparse
solves whose factorizations are reused across time steps. Schemes are written
against a small system interface so they run unchanged on dense matrices
(used by the unit tests) and on the full PIDE discretization.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .jump_operator import JumpOperator
from .spatial_operator import OperatorSet

__all__ = [
    "Scheme",
    "SchemeConfig",
    "FactoredStage",
    "DenseSystem",
    "PideSystem",
    "imex_euler_start",
    "run",
]


class Scheme(enum.Enum):
    CNFE = "cnfe"
    CNFI = "cnfi"
    IETR = "ietr"
    CNAB = "cnab"
    MCS = "mcs"
    MCS2 = "mcs2"
    SC2A = "sc2a"


#: schemes whose new value depends on the two previous time levels
TWO_STEP_SCHEMES = frozenset({Scheme.CNAB, Scheme.MCS2, Scheme.SC2A})
#: schemes started with the damped implicit-explicit Euler half-steps
CN_FAMILY = frozenset({Scheme.CNFE, Scheme.CNFI, Scheme.IETR, Scheme.CNAB})
#: jump-term evaluations consumed by one regular step
JUMP_EVALS_PER_STEP = {
    Scheme.CNFE: 1, Scheme.CNFI: 2, Scheme.IETR: 2, Scheme.CNAB: 1,
    Scheme.MCS: 2, Scheme.MCS2: 1, Scheme.SC2A: 1,
}

_DEFAULT_THETA = {Scheme.MCS: 1.0 / 3.0, Scheme.MCS2: 1.0 / 3.0, Scheme.SC2A: 0.75}


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection plus the free parameters that modify it."""

    scheme: Scheme
    theta: float | None = None          # ADI splitting parameter
    fixed_point_iters: int = 2          # inner iterations of CNFI

    def __post_init__(self) -> None:
        if self.theta is not None and not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.fixed_point_iters < 1:
            raise ValueError("need at least one fixed-point iteration")

    @property
    def resolved_theta(self) -> float | None:
        if self.theta is not None:
            return self.theta
        return _DEFAULT_THETA.get(self.scheme)

    @property
    def adams_hat(self) -> tuple[float, float]:
        """Extrapolation weights of the explicitly treated stiff-free parts."""
        return (1.5, -0.5)

    @property
    def adams_check(self) -> tuple[float, float]:
        """Extrapolation weights of the directionally split parts (SC2A)."""
        th = self.resolved_theta
        return (1.5 - th, -0.5 + th)


# ---------------------------------------------------------------------------
# Linear systems the schemes run on
# ---------------------------------------------------------------------------

@dataclass
class FactoredStage:
    """A factorized stage matrix I - coeff*dt*A, reused across time steps."""

    coeff: float
    solve: Callable[[np.ndarray], np.ndarray]


class DenseSystem:
    """Dense-matrix system for small problems and structural tests."""

    def __init__(self, a_dir1: np.ndarray, a_dir2: np.ndarray,
                 a_mixed: np.ndarray, a_jump: np.ndarray, dt: float):
        self.a_dir1 = np.asarray(a_dir1, dtype=float)
        self.a_dir2 = np.asarray(a_dir2, dtype=float)
        self.a_mixed = np.asarray(a_mixed, dtype=float)
        self.a_jump = np.asarray(a_jump, dtype=float)
        self.a_full_d = self.a_dir1 + self.a_dir2 + self.a_mixed
        self.dt = float(dt)
        self.jump_calls = 0
        self._stages: dict[tuple, FactoredStage] = {}

    def full_d(self, v: np.ndarray) -> np.ndarray:
        return self.a_full_d @ v

    def dir1(self, v: np.ndarray) -> np.ndarray:
        return self.a_dir1 @ v

    def dir2(self, v: np.ndarray) -> np.ndarray:
        return self.a_dir2 @ v

    def mixed(self, v: np.ndarray) -> np.ndarray:
        return self.a_mixed @ v

    def jump(self, v: np.ndarray) -> np.ndarray:
        self.jump_calls += 1
        return self.a_jump @ v

    def _stage(self, key: tuple, coeff: float, mat: np.ndarray) -> FactoredStage:
        stage = self._stages.get(key)
        if stage is None:
            n = mat.shape[0]
            lu = sla.lu_factor(np.eye(n) - coeff * self.dt * mat)
            stage = FactoredStage(coeff, lambda rhs, lu=lu: sla.lu_solve(lu, rhs))
            self._stages[key] = stage
        return stage

    def solve_cn(self, rhs: np.ndarray) -> np.ndarray:
        return self._stage(("cn",), 0.5, self.a_full_d).solve(rhs)

    def solve_dir(self, j: int, rhs: np.ndarray, theta: float) -> np.ndarray:
        mat = self.a_dir1 if j == 1 else self.a_dir2
        return self._stage(("dir", j, theta), theta, mat).solve(rhs)


def _tridiag_bands(mat: sp.spmatrix) -> np.ndarray:
    """Pack a tridiagonal sparse matrix into solve_banded's (3, n) layout."""
    n = mat.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = mat.diagonal(1)
    ab[1, :] = mat.diagonal(0)
    ab[2, :-1] = mat.diagonal(-1)
    return ab


class PideSystem:
    """Full-grid system: sparse A_D parts, FFT jump operator, fast solves.

    Direction solves exploit the Kronecker structure: (I - theta*dt*A_j) is
    block-diagonal up to a transpose, so one tridiagonal multi-RHS banded
    solve handles the whole grid.
    """

    def __init__(self, opset: OperatorSet, jump_op: JumpOperator, dt: float):
        self.opset = opset
        self.jump_op = jump_op
        self.dt = float(dt)
        self._cn: FactoredStage | None = None
        self._dir_bands: dict[tuple[int, float], np.ndarray] = {}
        self._shape = (opset.m2 + 1, opset.m1 + 1)

    @property
    def jump_calls(self) -> int:
        return self.jump_op.calls

    def full_d(self, v: np.ndarray) -> np.ndarray:
        return self.opset.a_full_d @ v

    def dir1(self, v: np.ndarray) -> np.ndarray:
        return self.opset.a_dir1 @ v

    def dir2(self, v: np.ndarray) -> np.ndarray:
        return self.opset.a_dir2 @ v

    def mixed(self, v: np.ndarray) -> np.ndarray:
        return self.opset.a_mixed @ v

    def jump(self, v: np.ndarray) -> np.ndarray:
        return self.jump_op.apply(v)

    def solve_cn(self, rhs: np.ndarray) -> np.ndarray:
        if self._cn is None:
            n = self.opset.n
            mat = (sp.identity(n) - 0.5 * self.dt * self.opset.a_full_d).tocsc()
            lu = splu(mat)
            self._cn = FactoredStage(0.5, lu.solve)
        return self._cn.solve(rhs)

    def solve_dir(self, j: int, rhs: np.ndarray, theta: float) -> np.ndarray:
        key = (j, theta)
        ab = self._dir_bands.get(key)
        if ab is None:
            block = self.opset.b_dir1 if j == 1 else self.opset.b_dir2
            n = block.shape[0]
            ab = _tridiag_bands(sp.identity(n) - theta * self.dt * block)
            self._dir_bands[key] = ab
        rhs2 = rhs.reshape(self._shape)
        if j == 1:
            out = sla.solve_banded((1, 1), ab, rhs2.T).T
        else:
            out = sla.solve_banded((1, 1), ab, rhs2)
        return np.ascontiguousarray(out).ravel()


# ---------------------------------------------------------------------------
# One step of each scheme
# ---------------------------------------------------------------------------

def imex_euler_start(system, v0: np.ndarray) -> np.ndarray:
    """Damped starting step: two implicit-explicit Euler half-steps.

    Each half-step of size dt/2 treats the diffusion part implicitly and the
    jump part explicitly; the implicit matrix is the Crank-Nicolson one, so
    its factorization is shared with the subsequent regular steps.
    """
    h = 0.5 * system.dt
    v_half = system.solve_cn(v0 + h * system.jump(v0))
    return system.solve_cn(v_half + h * system.jump(v_half))


def _cnfi_step(system, v: np.ndarray, n_iter: int) -> np.ndarray:
    """Crank-Nicolson step; the implicit jump term is fixed-point iterated,
    starting from the previous time level. One iteration is the
    forward-Euler (CNFE) variant."""
    dt = system.dt
    base = v + 0.5 * dt * system.full_d(v)
    jv = system.jump(v)
    jy = jv
    y = v
    for k in range(n_iter):
        y = system.solve_cn(base + 0.5 * dt * (jv + jy))
        if k < n_iter - 1:
            jy = system.jump(y)
    return y


def _ietr_step(system, v: np.ndarray) -> np.ndarray:
    dt = system.dt
    y0 = v + dt * (system.full_d(v) + system.jump(v))
    y_hat = y0 + 0.5 * dt * system.jump(y0 - v)
    return system.solve_cn(y_hat - 0.5 * dt * system.full_d(v))


def _cnab_step(system, v: np.ndarray, v_prev: np.ndarray) -> np.ndarray:
    dt = system.dt
    base = v + 0.5 * dt * system.full_d(v)
    return system.solve_cn(base + 0.5 * dt * system.jump(3.0 * v - v_prev))


def _mcs_step(system, v: np.ndarray, theta: float) -> np.ndarray:
    dt = system.dt
    y0 = v + dt * (system.full_d(v) + system.jump(v))
    y1 = system.solve_dir(1, y0 - theta * dt * system.dir1(v), theta)
    y2 = system.solve_dir(2, y1 - theta * dt * system.dir2(v), theta)
    w = y2 - v
    jw = system.jump(w)  # shared between the two corrector lines
    y_hat = y0 + theta * dt * (system.mixed(w) + jw)
    y_til = y_hat + (0.5 - theta) * dt * (system.full_d(w) + jw)
    z1 = system.solve_dir(1, y_til - theta * dt * system.dir1(v), theta)
    return system.solve_dir(2, z1 - theta * dt * system.dir2(v), theta)


def _mcs2_step(system, v: np.ndarray, v_prev: np.ndarray, theta: float) -> np.ndarray:
    dt = system.dt
    x0 = v + dt * system.full_d(v)
    y0 = x0 + 0.5 * dt * system.jump(3.0 * v - v_prev)
    y1 = system.solve_dir(1, y0 - theta * dt * system.dir1(v), theta)
    y2 = system.solve_dir(2, y1 - theta * dt * system.dir2(v), theta)
    w = y2 - v
    y_hat = y0 + theta * dt * system.mixed(w)
    y_til = y_hat + (0.5 - theta) * dt * system.full_d(w)
    z1 = system.solve_dir(1, y_til - theta * dt * system.dir1(v), theta)
    return system.solve_dir(2, z1 - theta * dt * system.dir2(v), theta)


def _sc2a_step(system, v: np.ndarray, v_prev: np.ndarray,
               config: SchemeConfig) -> np.ndarray:
    dt = system.dt
    theta = config.resolved_theta
    bh1, bh2 = config.adams_hat
    bc1, bc2 = config.adams_check
    u_hat = bh1 * v + bh2 * v_prev
    u_check = bc1 * v + bc2 * v_prev
    y0 = v + dt * (system.mixed(u_hat) + system.jump(u_hat)) \
        + dt * (system.dir1(u_check) + system.dir2(u_check))
    y1 = system.solve_dir(1, y0 - theta * dt * system.dir1(v), theta)
    return system.solve_dir(2, y1 - theta * dt * system.dir2(v), theta)


# ---------------------------------------------------------------------------
# Time marching
# ---------------------------------------------------------------------------

def run(config: SchemeConfig, system, v0: np.ndarray, n_steps: int) -> np.ndarray:
    """March the system from the initial vector over n_steps uniform steps.

    Starting procedures: the Crank-Nicolson family replaces its first step
    by the damped implicit-explicit Euler start; MCS2 and SC2A compute the
    first step with one MCS step at theta = 1/3; MCS needs none.
    """
    if n_steps < 1:
        raise ValueError("need at least one time step")
    scheme = config.scheme
    if scheme in TWO_STEP_SCHEMES and n_steps < 2:
        raise ValueError(f"{scheme.value} needs at least two time steps")
    v0 = np.asarray(v0, dtype=float)

    if scheme is Scheme.MCS:
        v = v0
        theta = config.resolved_theta
        for _ in range(n_steps):
            v = _mcs_step(system, v, theta)
        return v

    # one-step bootstrap for everything else
    if scheme in CN_FAMILY:
        v = imex_euler_start(system, v0)
    else:  # MCS2, SC2A
        v = _mcs_step(system, v0, 1.0 / 3.0)
    v_prev = v0
    for _ in range(1, n_steps):
        if scheme is Scheme.CNFE:
            v_new = _cnfi_step(system, v, 1)
        elif scheme is Scheme.CNFI:
            v_new = _cnfi_step(system, v, config.fixed_point_iters)
        elif scheme is Scheme.IETR:
            v_new = _ietr_step(system, v)
        elif scheme is Scheme.CNAB:
            v_new = _cnab_step(system, v, v_prev)
        elif scheme is Scheme.MCS2:
            v_new = _mcs2_step(system, v, v_prev, config.resolved_theta)
        else:
            v_new = _sc2a_step(system, v, v_prev, config)
        v_prev, v = v, v_new
    return v
