"""Non-crossing Bayesian quantile regression by Gaussian-process adjustment.

Stage 1 fits one asymmetric-Laplace quantile regression per level by Gibbs
sampling; stage 2 pools the induced quantiles of all fits with a squared
exponential kernel over quantile levels and picks the smallest bandwidth
that removes every crossing.
"""

from .ald import AldParams, ald_log_likelihood, ald_quantile, check_function
from .basis import BasisSpec, DesignMatrix, build_design, eval_basis, eval_basis_row
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    FitError,
    NumericalError,
    QRAdjustError,
    ShapeError,
)
from .gp_adjust import (
    AdjustedQuantileSurface,
    GpConfig,
    adjust_surface,
    detect_crossing,
    gp_predict,
    gp_predict_full_sample,
    lgpr_average_covariance,
    search_min_bandwidth,
    se_kernel,
)
from .induced import (
    InducedQuantileStats,
    InducedStatsTable,
    QuantileLevelGrid,
    induced_quantile_draws,
    induced_stats,
    induced_stats_table,
    standard_estimate,
)
from .sampler import PosteriorDraws, SamplerConfig, fit_ald_regression, fit_all_levels
from .simulate import SimulationDesign, TrueQuantileOracle, generate, get_design, rmise, std_normal_quantile

__version__ = "0.1.0"
