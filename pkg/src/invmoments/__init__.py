"""Invariant moment estimators.

Robust estimators of the mean and the second to fourth central moments
that are exact for a chosen consistent distribution, built from weighted
L-statistics of central-moment kernel evaluations.

Modules
-------
distributions   parametric families, quantiles and population moments
lstats          sample quantiles and weighted L-statistics
ustats          central-moment kernels, U- and LU-statistics, breakdown points
invariant       recombined and quantile I-statistics, fixed-point shape estimation
calibration     d values and D / I lookup tables
harness         Monte Carlo bias and RMSE evaluation
"""

from .distributions import DistributionSpec, population_moments, quantile, cdf
from .lstats import Sample, WLSpec, evaluate_wl, sample_quantile, empirical_cdf_value
from .ustats import KernelSpec, LUSpec, adjust_breakdown, lu_breakdown, lu_statistic
from .invariant import (
    FixedPointConfig,
    estimate,
    fixed_point_kurt,
    fixed_point_skew,
    qkm,
    recombined,
    rkm,
)
from .calibration import (
    DTable,
    ITable,
    TableSet,
    build_d_tables,
    build_i_table,
    default_itable,
    default_tables,
    interpolate_d,
)

__version__ = "0.1.0"

__all__ = [
    "DistributionSpec",
    "population_moments",
    "quantile",
    "cdf",
    "Sample",
    "WLSpec",
    "evaluate_wl",
    "sample_quantile",
    "empirical_cdf_value",
    "KernelSpec",
    "LUSpec",
    "adjust_breakdown",
    "lu_breakdown",
    "lu_statistic",
    "FixedPointConfig",
    "estimate",
    "fixed_point_kurt",
    "fixed_point_skew",
    "qkm",
    "recombined",
    "rkm",
    "DTable",
    "ITable",
    "TableSet",
    "build_d_tables",
    "build_i_table",
    "default_itable",
    "default_tables",
    "interpolate_d",
]
