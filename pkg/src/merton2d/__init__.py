"""Finite-difference pricer for European rainbow options under a two-asset
Merton jump-diffusion, with FFT-based jump handling and seven operator
splitting time-stepping schemes."""

from .analytic import bivariate_normal_cdf, mc_reference_price, put_on_min_value
from .grid import GridSpec, SpatialGrid, build_grid, cell_average_initial, roi_mask
from .harness import (
    ErrorReport,
    ExperimentConfig,
    ReferenceKind,
    build_context,
    emit_report,
    price,
    run_scheme,
    temporal_error_study,
    total_error_study,
)
from .jump_operator import JumpOperator, blocktoeplitz_matvec, build_kernel, build_log_grid
from .model import (
    ModelParams,
    OptionSpec,
    ParameterSet,
    PayoffKind,
    SetId,
    parameter_set,
    payoff,
)
from .spatial_operator import OperatorSet, assemble
from .stepping import DenseSystem, PideSystem, Scheme, SchemeConfig, run

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "OptionSpec", "ParameterSet", "PayoffKind", "SetId",
    "parameter_set", "payoff",
    "GridSpec", "SpatialGrid", "build_grid", "cell_average_initial", "roi_mask",
    "OperatorSet", "assemble",
    "JumpOperator", "blocktoeplitz_matvec", "build_kernel", "build_log_grid",
    "bivariate_normal_cdf", "put_on_min_value", "mc_reference_price",
    "Scheme", "SchemeConfig", "DenseSystem", "PideSystem", "run",
    "ExperimentConfig", "ErrorReport", "ReferenceKind", "build_context",
    "run_scheme", "temporal_error_study", "total_error_study", "price",
    "emit_report",
]
