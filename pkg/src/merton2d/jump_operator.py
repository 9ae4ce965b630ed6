"""FFT-accelerated nonlocal jump operator.

The jump integral becomes, in log-price coordinates, a 2-D cross-correlation
of the value surface with the bivariate normal log-jump density. On a uniform
log grid the discrete correlation is a two-level block-Toeplitz matvec, which
is computed exactly by circulant embedding and FFTs (no wrap-around).

The price grid is nonuniform, so value vectors are moved between the price
grid and the log grid by bilinear interpolation before and after the
correlation. The two boundary lines s1 = 0 and s2 = 0 reduce to 1-D problems
with the marginal normal densities; the corner maps to lam * v(0, 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.fft import fft, ifft, irfft, next_fast_len, rfft

from .grid import SpatialGrid
from .model import ModelParams, log_jump_density

__all__ = [
    "LogGrid",
    "ToeplitzKernel",
    "TransferMaps",
    "JumpOperator",
    "build_log_grid",
    "build_kernel",
    "build_transfer_maps",
    "blocktoeplitz_matvec",
]


# ---------------------------------------------------------------------------
# Circulant-embedded cross-correlation
#
# Core primitive: J[q] = sum_p W[p] * kern[p - q], with W supported on
# 0 <= p < P, outputs 0 <= q < Q and kern supported on [k_lo, k_hi].
# A circular FFT correlation of length L is exact (alias-free) as soon as
#   L >= max(k_hi - k_lo + 1, P - k_lo, Q + k_hi, P, Q);
# for the full block-Toeplitz product (P = Q = M, k_lo = -(M-1),
# k_hi = M-1) this gives the classical embedding of size 2M.
# ---------------------------------------------------------------------------

def _safe_len(P: int, Q: int, k_lo: int, k_hi: int) -> int:
    need = max(k_hi - k_lo + 1, P - k_lo, Q + k_hi, P, Q)
    return next_fast_len(need, real=True)


def _place_kernel_1d(kern: np.ndarray, k_lo: int, L: int) -> np.ndarray:
    buf = np.zeros(L)
    idx = np.arange(k_lo, k_lo + len(kern)) % L
    buf[idx] = kern
    return buf


def _place_kernel_2d(kern: np.ndarray, k_lo: tuple[int, int], L: tuple[int, int]) -> np.ndarray:
    buf = np.zeros(L)
    i0 = np.arange(k_lo[0], k_lo[0] + kern.shape[0]) % L[0]
    i1 = np.arange(k_lo[1], k_lo[1] + kern.shape[1]) % L[1]
    buf[np.ix_(i0, i1)] = kern
    return buf


class _Corr1D:
    """Precomputed 1-D circular cross-correlation with a fixed kernel."""

    def __init__(self, kern: np.ndarray, k_lo: int, P: int, Q: int):
        self.L = _safe_len(P, Q, k_lo, k_lo + len(kern) - 1)
        self.Q = Q
        self.kfft = np.conj(rfft(_place_kernel_1d(kern, k_lo, self.L)))

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return irfft(rfft(w, self.L) * self.kfft, self.L)[: self.Q]


class _Corr2D:
    """Precomputed 2-D circular cross-correlation with a fixed kernel.

    The transforms are staged per axis: the real pair runs along axis 0 and
    the complex pair along the contiguous axis 1, with the output cropped
    between the two inverse stages. The result is identical to a padded
    rfft2/irfft2 round trip but avoids transforming rows that are zero
    padding or are never read.
    """

    def __init__(self, kern: np.ndarray, k_lo: tuple[int, int],
                 P: tuple[int, int], Q: tuple[int, int]):
        hi = (k_lo[0] + kern.shape[0] - 1, k_lo[1] + kern.shape[1] - 1)
        self.L = (_safe_len(P[0], Q[0], k_lo[0], hi[0]),
                  _safe_len(P[1], Q[1], k_lo[1], hi[1]))
        self.Q = Q
        buf = _place_kernel_2d(kern, k_lo, self.L)
        self.kfft = np.conj(fft(rfft(buf, axis=0), axis=1))

    def __call__(self, w: np.ndarray) -> np.ndarray:
        L0, L1 = self.L
        f = fft(rfft(w, n=L0, axis=0), n=L1, axis=1)
        g = ifft(f * self.kfft, axis=1)[:, : self.Q[1]]
        return irfft(g, n=L0, axis=0)[: self.Q[0]]


# ---------------------------------------------------------------------------
# Log grid and kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogGrid:
    """Uniform power-of-two log-price grid on (-X_max, X_max]."""

    x_max: float
    M1: int
    M2: int

    @property
    def dx1(self) -> float:
        return 2.0 * self.x_max / self.M1

    @property
    def dx2(self) -> float:
        return 2.0 * self.x_max / self.M2

    def nodes(self, direction: int) -> np.ndarray:
        M = self.M1 if direction == 1 else self.M2
        dx = self.dx1 if direction == 1 else self.dx2
        return dx * np.arange(-M // 2 + 1, M // 2 + 1)


def _required_power_of_two(x_max: float, min_mesh: float, cap: int) -> int:
    M = 2
    while not 2.0 * x_max / M < min_mesh:
        M *= 2
        if M > cap:
            raise ValueError(
                f"log grid would need M > {cap}; price grid too skewed in log space")
    return M


def build_log_grid(grid: SpatialGrid, s_max: float, cap: int = 2**16) -> LogGrid:
    """Smallest power-of-two grids whose mesh width is strictly below the
    smallest mesh width of the log-transformed price grid (s = 0 excluded)."""
    x_max = math.log(s_max)
    mins = [np.min(np.diff(np.log(nodes[1:]))) for nodes in (grid.nodes1, grid.nodes2)]
    M1 = _required_power_of_two(x_max, mins[0], cap)
    M2 = _required_power_of_two(x_max, mins[1], cap)
    return LogGrid(x_max=x_max, M1=M1, M2=M2)


@dataclass(frozen=True)
class ToeplitzKernel:
    """Sampled log-jump density times the log-cell area, on offset indices.

    ``values[d - d_lo, c - c_lo]`` holds fbar(c*dx1, d*dx2)*dx1*dx2 for the
    direction-1 offset c and direction-2 offset d. A full kernel covers
    c = -M1+1 .. M1-1, d = -M2+1 .. M2-1; a truncated kernel covers the
    offsets carrying essentially all density mass.
    """

    values: np.ndarray  # shape (n_d, n_c)
    c_lo: int
    d_lo: int
    M1: int
    M2: int
    lam: float

    @property
    def c_hi(self) -> int:
        return self.c_lo + self.values.shape[1] - 1

    @property
    def d_hi(self) -> int:
        return self.d_lo + self.values.shape[0] - 1

    def full_values(self) -> np.ndarray:
        """Embed into the full offset range (2*M2-1, 2*M1-1)."""
        full = np.zeros((2 * self.M2 - 1, 2 * self.M1 - 1))
        full[self.d_lo + self.M2 - 1: self.d_hi + self.M2,
             self.c_lo + self.M1 - 1: self.c_hi + self.M1] = self.values
        return full

    def entry(self, c: int, d: int) -> float:
        if self.c_lo <= c <= self.c_hi and self.d_lo <= d <= self.d_hi:
            return float(self.values[d - self.d_lo, c - self.c_lo])
        return 0.0


def _support_range(gamma: float, delta: float, dx: float, M: int,
                   support_sigmas: float | None) -> tuple[int, int]:
    if support_sigmas is None:
        return -M + 1, M - 1
    lo = max(-M + 1, math.floor((gamma - support_sigmas * delta) / dx))
    hi = min(M - 1, math.ceil((gamma + support_sigmas * delta) / dx))
    return lo, hi


def build_kernel(params: ModelParams, lg: LogGrid,
                 support_sigmas: float | None = None) -> ToeplitzKernel:
    """Sample the log-jump density on the offset lattice.

    With ``support_sigmas`` set, offsets further than that many standard
    deviations from the jump mean are dropped (their density underflows to
    zero well before 40 sigmas in double precision).
    """
    c_lo, c_hi = _support_range(params.gamma1, params.delta1, lg.dx1, lg.M1, support_sigmas)
    d_lo, d_hi = _support_range(params.gamma2, params.delta2, lg.dx2, lg.M2, support_sigmas)
    c = lg.dx1 * np.arange(c_lo, c_hi + 1)
    d = lg.dx2 * np.arange(d_lo, d_hi + 1)
    vals = log_jump_density(params, c[None, :], d[:, None]) * lg.dx1 * lg.dx2
    return ToeplitzKernel(values=vals, c_lo=c_lo, d_lo=d_lo,
                          M1=lg.M1, M2=lg.M2, lam=params.lam)


def blocktoeplitz_matvec(kernel: ToeplitzKernel, v_bar: np.ndarray) -> np.ndarray:
    """Exact product of the two-level block-Toeplitz jump matrix with v_bar.

    ``v_bar`` is ordered with the direction-1 log index fastest. The
    correlation is computed through circulant embedding of size 2*M_i per
    level, so the result matches the dense matrix product to roundoff.
    """
    M1, M2 = kernel.M1, kernel.M2
    v_bar = np.asarray(v_bar, dtype=float)
    if v_bar.shape != (M1 * M2,):
        raise ValueError(f"expected vector of length {M1 * M2}, got {v_bar.shape}")
    corr = _Corr2D(kernel.values, (kernel.d_lo, kernel.c_lo), (M2, M1), (M2, M1))
    out = corr(v_bar.reshape(M2, M1))
    return kernel.lam * out.ravel()


# ---------------------------------------------------------------------------
# Bilinear transfer between the price grid and the log grid
# ---------------------------------------------------------------------------

def _to_log_matrix(nodes: np.ndarray, M: int, dx: float) -> sp.csr_matrix:
    """Rows: log nodes k = -M/2+1 .. M/2; columns: price nodes. Linear
    interpolation weights of the price-grid values at s = exp(x_k)."""
    m = len(nodes) - 1
    x = dx * np.arange(-M // 2 + 1, M // 2 + 1)
    s = np.exp(x)
    idx = np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, m - 1)
    w_left = (nodes[idx + 1] - s) / (nodes[idx + 1] - nodes[idx])
    w_left = np.clip(w_left, 0.0, 1.0)
    rows = np.repeat(np.arange(M), 2)
    cols = np.column_stack([idx, idx + 1]).ravel()
    data = np.column_stack([w_left, 1.0 - w_left]).ravel()
    return sp.csr_matrix((data, (rows, cols)), shape=(M, m + 1))


def _from_log_matrix(nodes: np.ndarray, M: int, dx: float) -> sp.csr_matrix:
    """Rows: price nodes (row 0 zero; boundaries are handled separately);
    columns: log nodes. Price nodes below the lowest log node clamp to it."""
    m = len(nodes) - 1
    pos = np.log(nodes[1:]) / dx + (M // 2 - 1)  # fractional row index on the log grid
    pos = np.clip(pos, 0.0, float(M - 1))
    idx = np.minimum(pos.astype(int), M - 2)
    frac = pos - idx
    rows = np.repeat(np.arange(1, m + 1), 2)
    cols = np.column_stack([idx, idx + 1]).ravel()
    data = np.column_stack([1.0 - frac, frac]).ravel()
    return sp.csr_matrix((data, (rows, cols)), shape=(m + 1, M))


@dataclass(frozen=True)
class TransferMaps:
    """Per-direction bilinear interpolation maps between the two grids."""

    p1: sp.csr_matrix  # price -> log, direction 1
    p2: sp.csr_matrix
    q1: sp.csr_matrix  # log -> price, direction 1
    q2: sp.csr_matrix

    @property
    def to_log(self) -> sp.csr_matrix:
        return sp.kron(self.p2, self.p1, format="csr")

    @property
    def from_log(self) -> sp.csr_matrix:
        return sp.kron(self.q2, self.q1, format="csr")


def build_transfer_maps(grid: SpatialGrid, lg: LogGrid) -> TransferMaps:
    return TransferMaps(
        p1=_to_log_matrix(grid.nodes1, lg.M1, lg.dx1),
        p2=_to_log_matrix(grid.nodes2, lg.M2, lg.dx2),
        q1=_from_log_matrix(grid.nodes1, lg.M1, lg.dx1),
        q2=_from_log_matrix(grid.nodes2, lg.M2, lg.dx2),
    )


# ---------------------------------------------------------------------------
# Full-grid jump operator
# ---------------------------------------------------------------------------

class _DirWindow:
    """Active log-index window of one direction.

    Only log nodes at and above the lowest interior price node feed the
    back-interpolation, so the correlation is restricted to the output
    window [k_lo, M/2] and the input window it reaches through the kernel.
    The values at the skipped far-negative log nodes are never read.
    """

    def __init__(self, nodes: np.ndarray, M: int, dx: float, c_lo: int, c_hi: int):
        mcheck = M // 2
        self.out_lo = max(-mcheck + 1, math.floor(math.log(nodes[1]) / dx))
        self.out_hi = mcheck
        self.in_lo = max(-mcheck + 1, self.out_lo + c_lo)
        self.in_hi = min(mcheck, self.out_hi + c_hi)
        self.n_out = self.out_hi - self.out_lo + 1
        self.n_in = self.in_hi - self.in_lo + 1
        # shifted kernel support in "input pos - output pos" units
        shift = self.in_lo - self.out_lo
        self.k_lo = c_lo - shift
        self.k_hi = c_hi - shift

    def row_slice(self, M: int) -> slice:
        """Input-window rows of the price->log matrix."""
        off = M // 2 - 1
        return slice(self.in_lo + off, self.in_hi + off + 1)

    def col_slice(self, M: int) -> slice:
        """Output-window columns of the log->price matrix."""
        off = M // 2 - 1
        return slice(self.out_lo + off, self.out_hi + off + 1)


def _edge_kernel(gamma: float, delta: float, dx: float, M: int,
                 support_sigmas: float | None) -> tuple[np.ndarray, int]:
    lo, hi = _support_range(gamma, delta, dx, M, support_sigmas)
    eta = dx * np.arange(lo, hi + 1)
    z = (eta - gamma) / delta
    vals = np.exp(-0.5 * z * z) / (delta * math.sqrt(2.0 * math.pi)) * dx
    return vals, lo


def _edge_tail_weights(kern: np.ndarray, k_lo: int,
                       win: _DirWindow) -> tuple[np.ndarray, np.ndarray]:
    """Kernel mass reaching past the ends of the log grid, per output node.

    The boundary-line value is extended constantly beyond the grid (the value
    there is asymptotically flat), so the edge operator preserves constants
    exactly; without the tails, mass loss near s = S_max distorts the edge.
    Returns (upper, lower) weight vectors over the output window.
    """
    mcheck = win.out_hi  # top log index is M/2 by construction
    csum = np.concatenate([[0.0], np.cumsum(kern)])
    total = csum[-1]
    ks = np.arange(win.out_lo, win.out_hi + 1)
    iu = np.clip(mcheck + 1 - ks - k_lo, 0, len(kern))
    upper = total - csum[iu]
    il = np.clip(-mcheck + 1 - ks - k_lo, 0, len(kern))
    lower = csum[il]
    return upper, lower


class JumpOperator:
    """Applies the discretized nonlocal jump integral to a full-grid vector.

    Kernel samples, FFT images and interpolation maps are prepared once per
    (grid, params) pair; ``apply`` only performs interpolation matvecs and
    one forward/inverse FFT pair per region. ``calls`` counts the number of
    operator applications (one per Algorithm-style evaluation).
    """

    def __init__(self, params: ModelParams, grid: SpatialGrid, s_max: float,
                 lg: LogGrid | None = None, support_sigmas: float | None = 7.0,
                 log_grid_cap: int = 2**16):
        self.params = params
        self.grid = grid
        self.lg = lg if lg is not None else build_log_grid(grid, s_max, cap=log_grid_cap)
        self.kernel = build_kernel(params, self.lg, support_sigmas=support_sigmas)
        self.maps = build_transfer_maps(grid, self.lg)
        self.lam = params.lam
        self.calls = 0

        lg_ = self.lg
        k = self.kernel
        self._win1 = _DirWindow(grid.nodes1, lg_.M1, lg_.dx1, k.c_lo, k.c_hi)
        self._win2 = _DirWindow(grid.nodes2, lg_.M2, lg_.dx2, k.d_lo, k.d_hi)
        w1, w2 = self._win1, self._win2

        # windowed interpolation operators (rows 1..m of the return maps)
        self._p1_in = self.maps.p1[w1.row_slice(lg_.M1), :]
        self._p2_in = self.maps.p2[w2.row_slice(lg_.M2), :]
        self._q1_out = self.maps.q1[1:, w1.col_slice(lg_.M1)]
        self._q2_out = self.maps.q2[1:, w2.col_slice(lg_.M2)]

        self._corr2d = _Corr2D(k.values, (w2.k_lo, w1.k_lo),
                               (w2.n_in, w1.n_in), (w2.n_out, w1.n_out))

        # 1-D operators for the degenerate boundary lines
        g1, g1_lo = _edge_kernel(params.gamma1, params.delta1, lg_.dx1, lg_.M1, support_sigmas)
        g2, g2_lo = _edge_kernel(params.gamma2, params.delta2, lg_.dx2, lg_.M2, support_sigmas)
        self._corr_edge1 = _Corr1D(g1, g1_lo - (w1.in_lo - w1.out_lo), w1.n_in, w1.n_out)
        self._corr_edge2 = _Corr1D(g2, g2_lo - (w2.in_lo - w2.out_lo), w2.n_in, w2.n_out)
        self._edge1_up, self._edge1_dn = _edge_tail_weights(g1, g1_lo, w1)
        self._edge2_up, self._edge2_dn = _edge_tail_weights(g2, g2_lo, w2)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Return the jump-operator product for the grid-ordered vector v."""
        grid = self.grid
        n = (grid.m1 + 1) * (grid.m2 + 1)
        v = np.asarray(v, dtype=float)
        if v.shape != (n,):
            raise ValueError(f"expected vector of length {n}, got {v.shape}")
        self.calls += 1
        v2 = v.reshape(grid.m2 + 1, grid.m1 + 1)
        out = np.zeros_like(v2)

        # interior (i >= 1, j >= 1): interpolate -> correlate -> interpolate back
        vbar = self._p2_in @ (self._p1_in @ v2.T).T
        jbar = self._corr2d(vbar)
        out[1:, 1:] = self._q2_out @ (self._q1_out @ jbar.T).T

        # boundary lines: 1-D correlations with the marginal densities,
        # with the line value extended constantly past the log-grid ends
        w2line = self._p2_in @ v2[:, 0]
        j2 = (self._corr_edge2(w2line)
              + w2line[-1] * self._edge2_up + w2line[0] * self._edge2_dn)
        out[1:, 0] = self._q2_out @ j2
        w1line = self._p1_in @ v2[0, :]
        j1 = (self._corr_edge1(w1line)
              + w1line[-1] * self._edge1_up + w1line[0] * self._edge1_dn)
        out[0, 1:] = self._q1_out @ j1
        out[0, 0] = v2[0, 0]
        return self.lam * out.ravel()

    def reset_calls(self) -> None:
        self.calls = 0
