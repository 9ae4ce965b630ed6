"""Semidiscrete convection-diffusion-reaction operator on the 2-D price grid.

Assembles sparse matrices acting on the grid-ordered vector (index
``i + j * (m1 + 1)``):

* ``a_dir1`` : all s1-direction derivative terms plus half the reaction term,
* ``a_dir2`` : the s2-direction analogue,
* ``a_mixed``: the cross-derivative term,

so that the full convection-diffusion-reaction matrix is their sum.
Interior rows use second-order central stencils on the nonuniform mesh; at
the far boundary the first derivative switches to the first-order backward
formula and the second derivative vanishes (linear boundary condition). At
s = 0 the direction degenerates and the stencil drops out.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import SpatialGrid
from .model import ModelParams, expected_relative_jump_size

__all__ = [
    "FDWeights",
    "OperatorSet",
    "Part",
    "central_first_derivative_weights",
    "central_second_derivative_weights",
    "assemble",
    "apply",
]


@dataclass(frozen=True)
class FDWeights:
    """Three-point stencil weights (w_minus1, w_0, w_plus1)."""

    w_minus1: float
    w_0: float
    w_plus1: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_minus1, self.w_0, self.w_plus1)


def central_first_derivative_weights(h_i: float, h_ip1: float) -> FDWeights:
    """Second-order central weights for u'(s_i) on mesh widths (h_i, h_ip1)."""
    s = h_i + h_ip1
    return FDWeights(-h_ip1 / (h_i * s), (h_ip1 - h_i) / (h_i * h_ip1), h_i / (h_ip1 * s))


def central_second_derivative_weights(h_i: float, h_ip1: float) -> FDWeights:
    """Second-order central weights for u''(s_i) on mesh widths (h_i, h_ip1)."""
    s = h_i + h_ip1
    return FDWeights(2.0 / (h_i * s), -2.0 / (h_i * h_ip1), 2.0 / (h_ip1 * s))


def _derivative_matrix(nodes: np.ndarray, order: int) -> sp.csr_matrix:
    """1-D numerical differentiation matrix on the nonuniform grid.

    Row 0 is zero (degenerate direction at s = 0); row m is the backward
    first-difference for order 1 and zero for order 2.
    """
    m = len(nodes) - 1
    h = np.diff(nodes)
    D = sp.lil_matrix((m + 1, m + 1))
    for i in range(1, m):
        if order == 1:
            w = central_first_derivative_weights(h[i - 1], h[i])
        else:
            w = central_second_derivative_weights(h[i - 1], h[i])
        D[i, i - 1], D[i, i], D[i, i + 1] = w.as_tuple()
    if order == 1:
        D[m, m - 1] = -1.0 / h[m - 1]
        D[m, m] = 1.0 / h[m - 1]
    return D.tocsr()


class Part(enum.Enum):
    MIXED = "mixed"
    DIR1 = "dir1"
    DIR2 = "dir2"
    FULL_D = "full_d"


@dataclass(frozen=True)
class OperatorSet:
    """Sparse convection-diffusion-reaction matrices on the grid ordering.

    ``b_dir1``/``b_dir2`` are the tridiagonal 1-D blocks with
    a_dir1 = I (x) b_dir1 and a_dir2 = b_dir2 (x) I; the ADI stage solver
    works with these directly.
    """

    a_mixed: sp.csr_matrix
    a_dir1: sp.csr_matrix
    a_dir2: sp.csr_matrix
    b_dir1: sp.csr_matrix
    b_dir2: sp.csr_matrix
    m1: int
    m2: int

    @property
    def a_full_d(self) -> sp.csr_matrix:
        full = getattr(self, "_full_cache", None)
        if full is None:
            full = (self.a_mixed + self.a_dir1 + self.a_dir2).tocsr()
            object.__setattr__(self, "_full_cache", full)
        return full

    @property
    def n(self) -> int:
        return (self.m1 + 1) * (self.m2 + 1)


def assemble(params: ModelParams, grid: SpatialGrid) -> OperatorSet:
    """Assemble the direction and mixed-derivative matrices for the model."""
    kappa1 = expected_relative_jump_size(params, 1)
    kappa2 = expected_relative_jump_size(params, 2)
    r, lam = params.r, params.lam

    def one_dir(nodes: np.ndarray, sigma: float, kappa: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        X = sp.diags(nodes)
        D1 = _derivative_matrix(nodes, 1)
        D2 = _derivative_matrix(nodes, 2)
        B = (0.5 * sigma**2) * (X @ X @ D2) + (r - lam * kappa) * (X @ D1) \
            - 0.5 * (r + lam) * sp.identity(len(nodes))
        return B.tocsr(), (X @ D1).tocsr()

    B1, XD1 = one_dir(grid.nodes1, params.sigma1, kappa1)
    B2, XD2 = one_dir(grid.nodes2, params.sigma2, kappa2)
    I1 = sp.identity(grid.m1 + 1, format="csr")
    I2 = sp.identity(grid.m2 + 1, format="csr")

    return OperatorSet(
        a_mixed=(params.rho * params.sigma1 * params.sigma2) * sp.kron(XD2, XD1, format="csr"),
        a_dir1=sp.kron(I2, B1, format="csr"),
        a_dir2=sp.kron(B2, I1, format="csr"),
        b_dir1=B1,
        b_dir2=B2,
        m1=grid.m1,
        m2=grid.m2,
    )


def apply(opset: OperatorSet, which: Part, v: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product with the selected operator part."""
    v = np.asarray(v, dtype=float)
    if v.shape != (opset.n,):
        raise ValueError(f"vector length {v.shape} does not match grid size {opset.n}")
    if which is Part.MIXED:
        return opset.a_mixed @ v
    if which is Part.DIR1:
        return opset.a_dir1 @ v
    if which is Part.DIR2:
        return opset.a_dir2 @ v
    return opset.a_full_d @ v
