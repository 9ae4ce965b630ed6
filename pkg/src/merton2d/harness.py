"""Convergence studies over the seven schemes, plus report emission.

Two experiment types:

* temporal-error study: fixed grid, sweep over base step counts N; the error
  is measured against a finely stepped MCS2 run on the same grid, so the
  spatial error cancels and only the time-discretization error remains.
* total-error study: sweep over grid sizes m with N = ceil(m/3); the error
  is measured against the semi-closed put-on-the-min formula, so spatial and
  temporal errors are combined.

Fair-comparison rule: schemes that need one jump-operator evaluation per
step (CNFE, CNAB, MCS2, SC2A) are run with N' = 2N steps, the others
(CNFI, IETR, MCS) with N' = N, equalizing the dominant cost at a given N.

Errors are maximum absolute differences over the region of interest
(K/2, 3K/2)^2, in currency units.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .analytic import put_on_min_value
from .grid import GridSpec, SpatialGrid, build_grid, cell_average_initial, roi_mask
from .jump_operator import JumpOperator
from .model import ParameterSet, PayoffKind, SetId, parameter_set
from .spatial_operator import OperatorSet, assemble
from .stepping import PideSystem, Scheme, SchemeConfig, run

__all__ = [
    "ExperimentConfig",
    "ErrorReport",
    "ReportRow",
    "ReferenceKind",
    "ReferenceCache",
    "SolverContext",
    "build_context",
    "run_scheme",
    "temporal_error_study",
    "total_error_study",
    "price",
    "emit_report",
    "n_prime",
]

#: schemes run with doubled step count under the fair-comparison rule
_DOUBLED = frozenset({Scheme.CNFE, Scheme.CNAB, Scheme.MCS2, Scheme.SC2A})


def n_prime(scheme: Scheme, n: int) -> int:
    """Step count actually used for base count n under the fair-comparison rule."""
    return 2 * n if scheme in _DOUBLED else n


class ReferenceKind(enum.Enum):
    MCS2 = "mcs2"
    ANALYTIC = "analytic"


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs of one study run."""

    set_id: SetId
    payoff_kind: PayoffKind
    schemes: tuple[Scheme, ...]
    m: int = 75
    n_list: tuple[int, ...] = ()
    m_list: tuple[int, ...] = ()        # total-error study sweep
    reference: ReferenceKind = ReferenceKind.MCS2
    reference_steps: int = 3000
    out_dir: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "set_id", SetId(self.set_id))
        object.__setattr__(self, "payoff_kind", PayoffKind(self.payoff_kind))
        object.__setattr__(self, "schemes",
                           tuple(Scheme(s) for s in self.schemes))
        for seq, label in ((self.n_list, "N_list"), (self.m_list, "m_list")):
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise ValueError(f"{label} must be strictly increasing")
        if self.reference_steps < 1:
            raise ValueError("reference_steps must be positive")


@dataclass
class ReportRow:
    set_id: int
    payoff: str
    scheme: str
    m: int
    n: int
    n_prime: int
    error: float
    observed_order: float | None
    wall_ms: float


@dataclass
class ErrorReport:
    rows: list[ReportRow]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for row in self.rows:
            if not row.error >= 0.0:
                raise ValueError("errors must be nonnegative")


# ---------------------------------------------------------------------------
# Discretization context and scheme runs
# ---------------------------------------------------------------------------

@dataclass
class SolverContext:
    """Everything fixed by (parameter set, payoff, m): grid, operators, V(0)."""

    pset: ParameterSet
    grid: SpatialGrid
    opset: OperatorSet
    jump_op: JumpOperator
    v0: np.ndarray

    @property
    def roi(self) -> np.ndarray:
        return roi_mask(self.grid, self.pset.option.K)


def build_context(set_id: SetId | int, payoff_kind: PayoffKind, m: int,
                  support_sigmas: float | None = 7.0) -> SolverContext:
    payoff_kind = PayoffKind(payoff_kind)
    pset = parameter_set(set_id, payoff_kind)
    s_max = pset.s_max(payoff_kind)
    grid = build_grid(GridSpec(m=m, payoff_kind=payoff_kind,
                               K=pset.option.K, S_max=s_max))
    return SolverContext(
        pset=pset,
        grid=grid,
        opset=assemble(pset.params, grid),
        jump_op=JumpOperator(pset.params, grid, s_max, support_sigmas=support_sigmas),
        v0=cell_average_initial(grid, pset.option),
    )


def run_scheme(ctx: SolverContext, scheme: Scheme, n_steps: int,
               theta: float | None = None) -> np.ndarray:
    """Value vector at maturity after n_steps uniform steps of the scheme."""
    system = PideSystem(ctx.opset, ctx.jump_op, dt=ctx.pset.option.T / n_steps)
    return run(SchemeConfig(scheme=scheme, theta=theta), system, ctx.v0, n_steps)


class ReferenceCache:
    """Caches reference solutions keyed by (set, payoff, m, kind, steps).

    ``computes`` counts actual reference computations, so tests can assert
    that a study reuses one reference per configuration.
    """

    def __init__(self) -> None:
        self._store: dict[tuple, np.ndarray] = {}
        self.computes = 0

    def get(self, config: ExperimentConfig, ctx: SolverContext) -> np.ndarray:
        """Reference values on the ROI nodes (flattened, ROI-masked order)."""
        key = (config.set_id, config.payoff_kind, ctx.grid.m1,
               config.reference, config.reference_steps)
        ref = self._store.get(key)
        if ref is None:
            self.computes += 1
            ref = self._compute(config, ctx)
            self._store[key] = ref
        return ref

    def _compute(self, config: ExperimentConfig, ctx: SolverContext) -> np.ndarray:
        roi = ctx.roi
        if config.reference is ReferenceKind.MCS2:
            v = run_scheme(ctx, Scheme.MCS2, config.reference_steps)
            return v[roi]
        if config.payoff_kind is not PayoffKind.PUT_ON_MIN:
            raise ValueError("analytic reference exists for put-on-the-min only")
        s1 = np.broadcast_to(ctx.grid.nodes1[None, :],
                             (ctx.grid.m2 + 1, ctx.grid.m1 + 1)).ravel()
        s2 = np.broadcast_to(ctx.grid.nodes2[:, None],
                             (ctx.grid.m2 + 1, ctx.grid.m1 + 1)).ravel()
        return put_on_min_value(ctx.pset.params, ctx.pset.option, s1[roi], s2[roi])


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

def _observed_order(err_prev: float | None, err: float,
                    x_prev: int | None, x: int) -> float | None:
    if err_prev is None or not (err_prev > 0 and err > 0):
        return None
    return math.log(err_prev / err) / math.log(x / x_prev)


def temporal_error_study(config: ExperimentConfig,
                         cache: ReferenceCache | None = None,
                         ctx: SolverContext | None = None) -> ErrorReport:
    """Time-discretization errors on a fixed grid over the N sweep."""
    if not config.n_list:
        raise ValueError("temporal study needs a nonempty N_list")
    if ctx is None:
        ctx = build_context(config.set_id, config.payoff_kind, config.m)
    cache = cache if cache is not None else ReferenceCache()
    ref = cache.get(config, ctx)
    roi = ctx.roi

    rows: list[ReportRow] = []
    for scheme in config.schemes:
        err_prev: float | None = None
        n_prev: int | None = None
        for n in config.n_list:
            np_ = n_prime(scheme, n)
            t0 = time.perf_counter()
            v = run_scheme(ctx, scheme, np_)
            wall_ms = 1e3 * (time.perf_counter() - t0)
            err = float(np.max(np.abs(v[roi] - ref)))
            rows.append(ReportRow(
                set_id=config.set_id.value, payoff=config.payoff_kind.value,
                scheme=scheme.value, m=config.m, n=n, n_prime=np_, error=err,
                observed_order=_observed_order(err_prev, err, n_prev, n),
                wall_ms=wall_ms))
            err_prev, n_prev = err, n
    return ErrorReport(rows=rows, meta={
        "study": "temporal", "set": config.set_id.value,
        "payoff": config.payoff_kind.value, "m": config.m,
        "reference": config.reference.value,
        "reference_steps": config.reference_steps,
        "x_axis": "N",
    })


def total_error_study(config: ExperimentConfig,
                      support_sigmas: float | None = 7.0) -> ErrorReport:
    """Combined space-time errors over the m sweep with N = ceil(m/3)."""
    if config.payoff_kind is not PayoffKind.PUT_ON_MIN:
        raise ValueError("total-error study needs the analytic put-on-the-min reference")
    if not config.m_list:
        raise ValueError("total-error study needs a nonempty m_list")
    cfg = replace(config, reference=ReferenceKind.ANALYTIC)

    rows_by_scheme: dict[Scheme, list[ReportRow]] = {s: [] for s in cfg.schemes}
    cache = ReferenceCache()
    prev: dict[Scheme, tuple[float, int]] = {}
    for m in cfg.m_list:
        ctx = build_context(cfg.set_id, cfg.payoff_kind, m, support_sigmas)
        ref = cache.get(replace(cfg, m=m), ctx)
        roi = ctx.roi
        n = math.ceil(m / 3)
        for scheme in cfg.schemes:
            np_ = n_prime(scheme, n)
            t0 = time.perf_counter()
            v = run_scheme(ctx, scheme, np_)
            wall_ms = 1e3 * (time.perf_counter() - t0)
            err = float(np.max(np.abs(v[roi] - ref)))
            err_prev, m_prev = prev.get(scheme, (None, None))
            rows_by_scheme[scheme].append(ReportRow(
                set_id=cfg.set_id.value, payoff=cfg.payoff_kind.value,
                scheme=scheme.value, m=m, n=n, n_prime=np_, error=err,
                observed_order=_observed_order(err_prev, err, m_prev, m),
                wall_ms=wall_ms))
            prev[scheme] = (err, m)
    rows = [row for scheme in cfg.schemes for row in rows_by_scheme[scheme]]
    return ErrorReport(rows=rows, meta={
        "study": "total", "set": cfg.set_id.value,
        "payoff": cfg.payoff_kind.value, "reference": "analytic",
        "x_axis": "m",
    })


def price(set_id: SetId | int, payoff_kind: PayoffKind, m: int, n_steps: int,
          scheme: Scheme, s1: float, s2: float,
          ctx: SolverContext | None = None) -> float:
    """Single-point price: march to maturity, bilinear read-out at (s1, s2)."""
    if ctx is None:
        ctx = build_context(set_id, payoff_kind, m)
    grid = ctx.grid
    if not (0.0 <= s1 <= grid.S_max and 0.0 <= s2 <= grid.S_max):
        raise ValueError(f"query point ({s1}, {s2}) outside [0, {grid.S_max}]^2")
    v2 = run_scheme(ctx, scheme, n_steps).reshape(grid.m2 + 1, grid.m1 + 1)
    from scipy.interpolate import RegularGridInterpolator
    interp = RegularGridInterpolator((grid.nodes2, grid.nodes1), v2, method="linear")
    return float(interp((s2, s1)))


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("set", "payoff", "scheme", "m", "N", "N_prime",
                "error", "observed_order", "wall_ms")


def _fmt(x: float | None, digits: str = ".12g") -> str:
    return "" if x is None else format(x, digits)


def emit_report(report: ErrorReport, out_dir, basename: str) -> tuple[str, str]:
    """Write <basename>.csv and a log-log error plot <basename>.svg.

    Output bytes depend only on the report contents, so identical reports
    produce identical files.
    """
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{basename}.csv"
    svg_path = out / f"{basename}.svg"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in report.rows:
        writer.writerow([row.set_id, row.payoff, row.scheme, row.m, row.n,
                         row.n_prime, _fmt(row.error),
                         _fmt(row.observed_order), _fmt(row.wall_ms, ".3f")])
    csv_path.write_text(buf.getvalue())

    _write_plot(report, svg_path)
    return str(csv_path), str(svg_path)


def _write_plot(report: ErrorReport, svg_path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x_is_m = report.meta.get("x_axis") == "m"
    with plt.rc_context({"svg.hashsalt": "merton2d"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        by_scheme: dict[str, list[ReportRow]] = {}
        for row in report.rows:
            by_scheme.setdefault(row.scheme, []).append(row)
        for scheme, rows in by_scheme.items():
            xs = [row.m if x_is_m else row.n for row in rows]
            ys = [row.error for row in rows]
            ax.loglog(xs, ys, marker="o", markersize=3.5, label=scheme)
        ax.set_xlabel("grid size m" if x_is_m else "base time steps N")
        ax.set_ylabel("max error on region of interest")
        title = f"set {report.meta.get('set')}, {report.meta.get('payoff')} payoff"
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        if by_scheme:
            ax.legend(fontsize=8)
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
