"""Closed-form comparison estimators and diagnostics.

All of them return :class:`EstimateWithSE`. Ratios of sample covariances use
the plug-in divisor ``n``, which cancels in every ratio below.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bridge import MomentSpec, builtin_spec, BridgeModel, InstrumentMap, bridge_features, instrument_features
from .data import CovarianceSummary, NCDataset, logistic_fit, ols_fit
from .errors import DataError, IdentificationError
from .gmm import HacConfig, gmm_fit, long_run_covariance
from .inference import confidence_interval, p_value

REL_TOL = 1e-12
WEAK_T = 2.0


@dataclass(frozen=True)
class EstimateWithSE:
    value: float
    std_error: float
    method: str
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not (np.isfinite(self.std_error) and self.std_error >= 0):
            raise IdentificationError(f"{self.method}: invalid standard error {self.std_error}")

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        return confidence_interval(self.value, self.std_error**2, level)

    @property
    def p_value(self) -> float:
        return p_value(self.value, self.std_error**2)

    def report(self, level: float = 0.95) -> dict:
        lo, hi = self.ci(level)
        return {
            "method": self.method,
            "estimate": float(self.value),
            "std_error": float(self.std_error),
            "ci_lower": lo,
            "ci_upper": hi,
            "p_value": self.p_value,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class ConfoundingTestResult:
    alpha1: EstimateWithSE
    alpha2: EstimateWithSE
    hac_bandwidth: int

    @property
    def p_values(self) -> tuple[float, float]:
        return self.alpha1.p_value, self.alpha2.p_value

    def report(self, level: float = 0.95) -> dict:
        return {
            "alpha1": self.alpha1.report(level),
            "alpha2": self.alpha2.report(level),
            "hac_bandwidth": self.hac_bandwidth,
        }


def _scale(*vals: float) -> float:
    return max(max(abs(v) for v in vals), np.finfo(float).tiny)


def nc_ratio(cov: CovarianceSummary) -> float:
    """Negative-control covariance ratio ``(s_xw s_zy - s_xy s_zw) / (s_xw s_xz - s_xx s_zw)``."""
    a, b = cov.xw * cov.xz, cov.xx * cov.zw
    den = a - b
    if abs(den) <= REL_TOL * _scale(a, b):
        raise IdentificationError("negative control denominator is zero: Z carries no information on W given X")
    return (cov.xw * cov.zy - cov.xy * cov.zw) / den


def relevance_ratio(cov: CovarianceSummary) -> float:
    """Coefficient of Z when W is regressed on (1, X, Z), from covariances."""
    a, b = cov.xz * cov.xz, cov.xx * cov.zz
    den = a - b
    if abs(den) <= REL_TOL * _scale(a, b):
        raise IdentificationError("X and Z are collinear")
    return (cov.xw * cov.xz - cov.xx * cov.zw) / den


def _gmm_estimate(spec: MomentSpec, data: NCDataset, index: int, method: str, hac: HacConfig | None):
    fit = gmm_fit(spec, data, hac=hac)
    se = float(fit.std_errors(hac is not None)[index])
    return float(fit.theta_hat[index]), se


def iv_estimate(data: NCDataset, *, covariates: bool = False, hac: HacConfig | None = None) -> EstimateWithSE:
    """Instrumental-variable estimate of the X coefficient using Z as instrument.

    Without covariates this is ``s_zy / s_xz``; with covariates it is two-stage
    least squares with ``V`` as exogenous controls. The standard error is the
    just-identified GMM sandwich.
    """
    cov = data.covariances()
    if abs(cov.xz) <= REL_TOL * np.sqrt(max(cov.xx * cov.zz, np.finfo(float).tiny)):
        raise IdentificationError("weak instrument: Z is uncorrelated with X")
    vt = [f"v[{j}]" for j in range(data.p)] if covariates else []
    spec = MomentSpec(
        BridgeModel("linear", bridge_features(["1", "x", *vt])),
        InstrumentMap(instrument_features(["1", "z", *vt])),
    )
    value, se = _gmm_estimate(spec, data, 1, "iv", hac)
    if not covariates:
        value = cov.zy / cov.xz
    first = ols_fit(np.column_stack([np.ones(data.n), data.z, data.v[:, : len(vt)]]), data.x)
    se1 = float(np.sqrt(first.classical_cov()[1, 1]))
    t = abs(first.coef[1]) / se1 if se1 > 0 else np.inf
    warnings = (f"weak instrument: first-stage |t| = {t:.2f} < {WEAK_T:g}",) if t < WEAK_T else ()
    return EstimateWithSE(value, se, "iv", warnings)


def nc_estimate(data: NCDataset, *, hac: HacConfig | None = None) -> EstimateWithSE:
    """Negative-control estimate of the X coefficient under ``b = (1, X, W) gamma``, ``q = (1, X, Z)``."""
    value = nc_ratio(data.covariances())
    _, se = _gmm_estimate(builtin_spec("structural"), data, 1, "nc", hac)
    return EstimateWithSE(value, se, "nc")


def nc_tsls(data: NCDataset) -> EstimateWithSE:
    """Modified two-stage least squares: W on (1, X, Z), then Y on (1, X, W-hat).

    The standard error is the GMM sandwich, which coincides with the correct
    two-stage variance (not the naive second-stage one).
    """
    one = np.ones(data.n)
    first = ols_fit(np.column_stack([one, data.x, data.z]), data.w)
    w_hat = data.w - first.resid
    second = ols_fit(np.column_stack([one, data.x, w_hat]), data.y)
    _, se = _gmm_estimate(builtin_spec("structural"), data, 1, "nc_tsls", None)
    return EstimateWithSE(float(second.coef[1]), se, "nc_tsls")


def first_stage_relevance(data: NCDataset) -> EstimateWithSE:
    """Coefficient of Z in the regression of W on (1, X, Z) with its classical OLS standard error.

    Attaches a warning when ``|t| < 2``: the negative-control denominator may be
    close to zero.
    """
    one = np.ones(data.n)
    fit = ols_fit(np.column_stack([one, data.x, data.z]), data.w)
    value = float(fit.coef[2])
    se = float(np.sqrt(fit.classical_cov()[2, 2]))
    warnings = ()
    if se == 0 or abs(value) < WEAK_T * se:
        warnings = (f"weak identification: first-stage |t| < {WEAK_T:g}",)
    return EstimateWithSE(value, se, "first_stage", warnings)


def relevance_from_covariances(cov: CovarianceSummary) -> tuple[float, tuple[str, ...]]:
    value = relevance_ratio(cov)
    num_scale = _scale(cov.xw * cov.xz, cov.xx * cov.zw)
    if abs(value) * abs(cov.xz * cov.xz - cov.xx * cov.zz) <= REL_TOL * num_scale:
        return value, ("degenerate identification: negative-control denominator is zero",)
    return value, ()


def _controls(data: NCDataset, controls) -> np.ndarray:
    if controls is None or controls is True:
        return data.v
    if controls is False:
        return np.empty((data.n, 0))
    c = np.asarray(controls, dtype=float)
    return c[:, None] if c.ndim == 1 else c


def ols_estimate(data: NCDataset, controls=None, *, hac: HacConfig | None = None) -> EstimateWithSE:
    """Coefficient of X in the regression of Y on (1, X, controls); controls default to ``V``.

    Classical standard errors, or Newey-West when ``hac`` is given.
    """
    C = _controls(data, controls)
    X = np.column_stack([np.ones(data.n), data.x, C])
    fit = ols_fit(X, data.y)
    if hac is None:
        se = float(np.sqrt(fit.classical_cov()[1, 1]))
    else:
        se = float(np.sqrt(ols_hac_cov(X, fit.resid, hac)[1, 1]))
    return EstimateWithSE(float(fit.coef[1]), se, "ols")


def ols_hac_cov(X: np.ndarray, resid: np.ndarray, hac: HacConfig) -> np.ndarray:
    n = X.shape[0]
    bread = np.linalg.inv(X.T @ X / n)
    S = long_run_covariance(X * resid[:, None], hac.resolve(n))
    V = bread @ S @ bread / n
    return 0.5 * (V + V.T)


def _hajek(x, y, e) -> float:
    w1 = x / e
    w0 = (1.0 - x) / (1.0 - e)
    return float(w1 @ y / w1.sum() - w0 @ y / w0.sum())


def ipw_estimate(
    data: NCDataset,
    controls=None,
    *,
    n_boot: int = 200,
    rng: np.random.Generator | None = None,
    clip: tuple[float, float] = (0.01, 0.99),
) -> EstimateWithSE:
    """Hajek inverse-probability-weighted contrast of means for binary X.

    Propensities come from a logistic model of X on (1, controls) and are
    clipped to ``clip``. The standard error is the SD of ``n_boot`` bootstrap
    replicates drawn from ``rng`` (``n_boot=0`` skips it and reports 0).
    """
    x = data.x
    if not np.all((x == 0) | (x == 1)):
        raise DataError("IPW needs a binary exposure")
    C = _controls(data, controls)
    design = np.column_stack([np.ones(data.n), C])

    def estimate(idx=None):
        d, xx, yy = (design, x, data.y) if idx is None else (design[idx], x[idx], data.y[idx])
        beta = logistic_fit(d, xx)
        e = np.clip(1.0 / (1.0 + np.exp(-(d @ beta))), *clip)
        return _hajek(xx, yy, e)

    value = estimate()
    if n_boot <= 0:
        return EstimateWithSE(value, 0.0, "ipw", ("no bootstrap standard error",))
    rng = rng if rng is not None else np.random.default_rng(0)
    reps = []
    for _ in range(n_boot):
        idx = rng.integers(0, data.n, data.n)
        try:
            reps.append(estimate(idx))
        except (IdentificationError, DataError):
            continue
    if len(reps) < 2:
        raise IdentificationError("bootstrap failed for IPW")
    return EstimateWithSE(value, float(np.std(reps, ddof=1)), "ipw")


def confounding_test(
    data: NCDataset,
    controls=None,
    hac: HacConfig | None = None,
) -> ConfoundingTestResult:
    """Regress W on (X, Z, 1, controls) and test the X and Z coefficients.

    Under no unmeasured confounding both are zero because W precedes X and Z.
    Standard errors are Newey-West; p-values use the normal approximation.
    """
    hac = hac or HacConfig()
    C = _controls(data, controls)
    if data.n <= C.shape[1] + 3:
        raise IdentificationError("too few observations for the confounding test")
    if np.ptp(data.w) == 0:
        raise IdentificationError("negative control outcome is constant")
    X = np.column_stack([data.x, data.z, np.ones(data.n), C])
    fit = ols_fit(X, data.w)
    V = ols_hac_cov(X, fit.resid, hac)
    se = np.sqrt(np.clip(np.diag(V), 0, None))
    return ConfoundingTestResult(
        EstimateWithSE(float(fit.coef[0]), float(se[0]), "confounding_test_alpha1"),
        EstimateWithSE(float(fit.coef[1]), float(se[1]), "confounding_test_alpha2"),
        hac.resolve(data.n),
    )
