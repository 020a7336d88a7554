"""Negative controls built from a single time series.

For day ``i`` the future exposure ``X_{i+k}`` serves as negative control
exposure and the past outcome ``Y_{i-k}`` as negative control outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridge import builtin_spec, MomentSpec
from .data import NCDataset
from .errors import DataError, SpecError
from .estimators import confounding_test, ols_estimate
from .gmm import HacConfig, gmm_fit


@dataclass(frozen=True)
class SeriesFrame:
    """Exposure and outcome series in time order, with optional ``(T, p)`` covariates.

    Covariates named in ``deterministic`` (functions of the day index, such as
    trend and Fourier terms) are not lagged: their lags are linear
    combinations of the current terms and would make the design singular.
    """

    x: np.ndarray
    y: np.ndarray
    covariates: np.ndarray | None = None
    k: int = 1
    covariate_names: tuple[str, ...] = ()
    deterministic: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise DataError(f"x and y must be equal-length vectors, got {x.shape} and {y.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("series contain non-finite values")
        if int(self.k) != self.k or self.k < 1:
            raise SpecError(f"lag k must be a positive integer, got {self.k}")
        cov = np.empty((x.size, 0)) if self.covariates is None else np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        if cov.shape[0] != x.size:
            raise DataError(f"covariates have {cov.shape[0]} rows for a series of length {x.size}")
        if not np.all(np.isfinite(cov)):
            raise DataError("covariates contain non-finite values")
        names = tuple(self.covariate_names) or tuple(f"c{j}" for j in range(cov.shape[1]))
        if len(names) != cov.shape[1]:
            raise DataError("covariate name count does not match covariate columns")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "covariates", cov)
        unknown = set(self.deterministic) - set(names)
        if unknown:
            raise DataError(f"deterministic covariates {sorted(unknown)} are not among the covariates")
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "deterministic", tuple(self.deterministic))
        object.__setattr__(self, "k", int(self.k))

    @property
    def T(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class Ar1Config:
    """Stationary AR(1) with unit marginal variance; innovations scaled by ``sqrt(1 - xi^2)``."""

    xi: float

    def __post_init__(self):
        if not -1 < self.xi < 1:
            raise SpecError(f"AR(1) coefficient must lie in (-1, 1), got {self.xi}")


def simulate_ar1(cfg: Ar1Config | float, T: int, rng: np.random.Generator) -> np.ndarray:
    if not isinstance(cfg, Ar1Config):
        cfg = Ar1Config(float(cfg))
    xi = cfg.xi
    eps = rng.standard_normal(T)
    u = np.empty(T)
    u[0] = eps[0]
    scale = np.sqrt(1.0 - xi * xi)
    for t in range(1, T):
        u[t] = xi * u[t - 1] + scale * eps[t]
    return u


def trend_basis(T: int, harmonics: int = 4, period: float = 365.0) -> tuple[np.ndarray, tuple[str, ...]]:
    """Polynomial and Fourier terms of the day index ``t = 1..T``."""
    t = np.arange(1, T + 1, dtype=float)
    cols = [t / T, t**2 / T**2]
    names = ["trend1", "trend2"]
    for j in range(1, harmonics + 1):
        cols += [np.sin(2 * np.pi * j * t / period), np.cos(2 * np.pi * j * t / period)]
        names += [f"sin{j}", f"cos{j}"]
    return np.column_stack(cols), tuple(names)


def build_lagged(frame: SeriesFrame, exposure_lags: int = 1) -> NCDataset:
    """Lagged design with ``w = Y_{i-k}``, ``z = X_{i+k}``.

    Covariate columns, in order: ``X_{i-1} .. X_{i-L}`` (``L = exposure_lags``),
    current covariates, then non-deterministic covariates lagged by ``k``
    (suffix ``_lagk``).
    Rows keep every ``i`` for which all of these exist; with ``L <= k`` that is
    ``T - 2k`` rows.
    """
    k, T = frame.k, frame.T
    if exposure_lags < 0:
        raise SpecError("exposure_lags must be non-negative")
    start = max(k, exposure_lags)
    stop = T - k
    n = stop - start
    if T < k + 3 or n < 2:
        raise DataError(f"series of length {T} is too short for lag {k}")
    idx = np.arange(start, stop)
    cov = frame.covariates
    v_cols = [frame.x[idx - j] for j in range(1, exposure_lags + 1)]
    names = [f"x_lag{j}" for j in range(1, exposure_lags + 1)]
    v_cols += [cov[idx, j] for j in range(cov.shape[1])]
    names += list(frame.covariate_names)
    lagged = [j for j, c in enumerate(frame.covariate_names) if c not in frame.deterministic]
    v_cols += [cov[idx - k, j] for j in lagged]
    names += [f"{frame.covariate_names[j]}_lag{k}" for j in lagged]
    v = np.column_stack(v_cols) if v_cols else np.empty((n, 0))
    return NCDataset(
        x=frame.x[idx], y=frame.y[idx], z=frame.x[idx + k], w=frame.y[idx - k], v=v, v_names=tuple(names)
    )


def lagged_columns(data: NCDataset) -> list[int]:
    """Covariate columns that refer to earlier days (exposure lags and lagged covariates)."""
    return [j for j, name in enumerate(data.v_names) if "_lag" in name]


def current_columns(data: NCDataset) -> list[int]:
    """Columns for the regression of Y on X: exposure lags plus current-day covariates."""
    return [j for j, name in enumerate(data.v_names) if name.startswith("x_lag") or "_lag" not in name]


def nc_series_fit(data: NCDataset, hac: HacConfig, spec: MomentSpec | None = None):
    spec = spec or builtin_spec("timeseries_lag", data.p)
    return gmm_fit(spec, data, hac=hac)


def analyze_series(
    frame: SeriesFrame,
    spec: MomentSpec | None = None,
    hac: HacConfig | None = None,
    *,
    exposure_lags: int = 1,
    level: float = 0.95,
) -> dict:
    """Ordinary least squares, confounding test and negative-control GMM on one series.

    All three use Newey-West standard errors. The GMM bridge defaults to
    ``(1, X, V, W)`` over every covariate column of the lagged design.
    """
    hac = hac or HacConfig()
    data = build_lagged(frame, exposure_lags)
    ols = ols_estimate(data, data.v[:, current_columns(data)], hac=hac)
    ctest = confounding_test(data, data.v[:, lagged_columns(data)], hac=hac)
    fit = nc_series_fit(data, hac, spec)
    nc_report = fit.report(level, hac=True)
    names = [p["name"] for p in nc_report["parameters"]]
    x_param = nc_report["parameters"][names.index("gamma[x]") if "gamma[x]" in names else 1]
    return {
        "n": data.n,
        "lag": frame.k,
        "exposure_lags": exposure_lags,
        "covariates": list(data.v_names),
        "ols": ols.report(level),
        "confounding_test": ctest.report(level),
        "nc_gmm": {"beta1": x_param, "fit": nc_report},
    }
