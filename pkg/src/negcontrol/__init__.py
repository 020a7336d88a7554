"""Double negative control inference on causal effects through confounding bridge functions."""

from .bridge import (
    BridgeModel,
    InstrumentMap,
    MomentSpec,
    builtin_bridges,
    builtin_spec,
    mean_moments,
    moment_function,
)
from .data import CovarianceSummary, NCDataset, logistic_fit, ols_fit, read_csv, sample_cov, write_csv
from .errors import DataError, IdentificationError, NegControlError, SeparationError, SpecError
from .estimators import (
    EstimateWithSE,
    confounding_test,
    first_stage_relevance,
    ipw_estimate,
    iv_estimate,
    nc_estimate,
    nc_tsls,
    ols_estimate,
)
from .gmm import GmmFit, HacConfig, gmm_fit, gmm_objective, hac_variance, moment_jacobian, sandwich_variance
from .inference import confidence_interval, coverage_probability, p_value
from .summary import (
    RiskDifferenceSummary,
    SensitivityResult,
    binary_nc_adjust,
    explain_away_threshold,
    positive_control_adjust,
)
from .timeseries import Ar1Config, SeriesFrame, analyze_series, build_lagged, simulate_ar1

__version__ = "0.1.0"
