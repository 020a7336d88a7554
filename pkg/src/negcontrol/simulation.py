"""Monte Carlo studies: data-generating processes, the replication runner, and reports.

Three scenarios are available:

``binary_exposure``
    Binary X with a logistic exposure model; target is the average causal
    effect (truth 0.5). ``xi`` is the W-U association.
``structural_continuous``
    Continuous X in a linear structural model; target is the X coefficient
    (truth 0.5). ``eta`` is the Z-U association, ``xi`` the V^2 term in W
    that breaks the linear bridge.
``timeseries``
    AR(1) latent confounder with autocorrelation ``xi``; negative controls
    are built from the series itself; target is the X coefficient (truth 0.7).
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bridge import builtin_spec
from .data import NCDataset
from .errors import NegControlError, SpecError
from .estimators import iv_estimate, ipw_estimate, ols_estimate
from .gmm import HacConfig, gmm_fit
from .inference import confidence_interval, coverage_probability, p_value  # noqa: F401  (re-exported)
from .timeseries import SeriesFrame, build_lagged, simulate_ar1

SCENARIOS = ("binary_exposure", "structural_continuous", "timeseries")
TRUTH = {"binary_exposure": 0.5, "structural_continuous": 0.5, "timeseries": 0.7}
DEFAULT_ESTIMATORS = {
    "binary_exposure": ("nc", "ols", "ipw"),
    "structural_continuous": ("nc", "ols", "iv"),
    "timeseries": ("nc", "ols", "ols_lag"),
}
SIGMA_UV = 0.5
TS_BANDWIDTH = 10


@dataclass(frozen=True)
class DgpConfig:
    scenario: str
    eta: float
    xi: float
    n: int
    sigma_uv: float = SIGMA_UV

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise SpecError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if int(self.n) != self.n or self.n < 50:
            raise SpecError(f"sample size must be an integer >= 50, got {self.n}")
        if self.scenario == "timeseries" and not -1 < self.xi < 1:
            raise SpecError("timeseries scenario needs |xi| < 1")
        if not -1 < self.sigma_uv < 1:
            raise SpecError("sigma_uv must be a correlation in (-1, 1)")
        object.__setattr__(self, "n", int(self.n))

    @property
    def truth(self) -> float:
        return TRUTH[self.scenario]


def _vu(n: int, rho: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    L = np.linalg.cholesky(np.array([[1.0, rho], [rho, 1.0]]))
    vu = rng.standard_normal((n, 2)) @ L.T
    return vu[:, 0], vu[:, 1]


def generate(cfg: DgpConfig, rng: np.random.Generator) -> NCDataset | SeriesFrame:
    """Draw one sample; the time-series scenario returns the raw :class:`SeriesFrame`."""
    n, eta, xi = cfg.n, cfg.eta, cfg.xi
    if cfg.scenario == "binary_exposure":
        v, u = _vu(n, cfg.sigma_uv, rng)
        e1, e2 = rng.standard_normal(n), rng.standard_normal(n)
        z = 0.5 + 0.5 * v + u + e1
        lin = -0.5 + z + 0.5 * v + eta * u
        x = (rng.random(n) < 1.0 / (1.0 + np.exp(-lin))).astype(float)
        w = 1.0 - v + xi * u + e2
        y = 1.0 + 0.5 * x + 2.0 * v + u + 1.5 * x * u + 2.0 * e2
        return NCDataset(x, y, z, w, v[:, None], ("v",))
    if cfg.scenario == "structural_continuous":
        v, u = _vu(n, cfg.sigma_uv, rng)
        e1, e2, e3 = rng.standard_normal(n), rng.standard_normal(n), rng.standard_normal(n)
        z = 0.5 + 1.5 * v + eta * u + e1
        x = 0.5 + z + 0.5 * v + 0.5 * v**2 + 1.5 * u + e2
        w = 1.0 - v + xi * v**2 + 1.5 * u + e3
        y = 1.0 + 0.5 * x + v + u + 2.0 * e3
        return NCDataset(x, y, z, w, v[:, None], ("v",))
    u = simulate_ar1(xi, n, rng)
    v = 0.6 * u + rng.standard_normal(n)
    x = 0.4 + 1.5 * v + eta * u + rng.standard_normal(n)
    y = 0.5 + 0.7 * x + 1.5 * v + 0.9 * u + rng.standard_normal(n)
    return SeriesFrame(x, y, v[:, None], k=1, covariate_names=("v",))


def _estimate(name: str, scenario: str, sample, rng: np.random.Generator, ipw_boot: int) -> tuple[float, float]:
    """Point estimate and standard error of the target for one estimator."""
    if scenario == "timeseries":
        hac = HacConfig(TS_BANDWIDTH)
        if name == "nc":
            data = build_lagged(sample)
            fit = gmm_fit(builtin_spec("timeseries_lag", data.p), data, hac=hac)
            return float(fit.theta_hat[1]), float(fit.std_errors(hac=True)[1])
        if name == "ols":
            full = NCDataset(sample.x, sample.y, sample.x, sample.y, sample.covariates)
            est = ols_estimate(full, hac=hac)
            return est.value, est.std_error
        if name == "ols_lag":
            data = build_lagged(sample)
            est = ols_estimate(data, np.column_stack([data.v, data.w]), hac=hac)
            return est.value, est.std_error
    elif name == "nc":
        if scenario == "binary_exposure":
            fit = gmm_fit(builtin_spec("binary_interaction", sample.p, contrast=(1.0, 0.0)), sample)
            return float(fit.theta_hat[-1]), float(fit.std_errors(hac=False)[-1])
        fit = gmm_fit(builtin_spec("linear_additive", sample.p), sample)
        return float(fit.theta_hat[1]), float(fit.std_errors(hac=False)[1])
    elif name == "ols":
        est = ols_estimate(sample)
        return est.value, est.std_error
    elif name == "ipw" and scenario == "binary_exposure":
        est = ipw_estimate(sample, n_boot=ipw_boot, rng=rng)
        return est.value, (est.std_error if ipw_boot > 0 else float("nan"))
    elif name == "iv" and scenario == "structural_continuous":
        est = iv_estimate(sample, covariates=True)
        return est.value, est.std_error
    raise SpecError(f"estimator {name!r} is not available for scenario {scenario!r}")


def replication_rng(master_seed: int, r: int) -> np.random.Generator:
    """Independent stream for replication ``r``; identical however replications are scheduled."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(r)]))


def run_replication(cfg: DgpConfig, estimators, master_seed: int, r: int, ipw_boot: int = 200) -> np.ndarray:
    """Row of ``(estimate, se)`` pairs, NaN where an estimator failed."""
    rng = replication_rng(master_seed, r)
    data_rng, est_rng = (np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(2))
    sample = generate(cfg, data_rng)
    out = np.full((len(estimators), 2), np.nan)
    for j, name in enumerate(estimators):
        try:
            out[j] = _estimate(name, cfg.scenario, sample, est_rng, ipw_boot)
        except (NegControlError, np.linalg.LinAlgError, FloatingPointError):
            pass
    return out


def _run_chunk(args):
    cfg, estimators, master_seed, reps, ipw_boot = args
    return [(r, run_replication(cfg, estimators, master_seed, r, ipw_boot)) for r in reps]


def default_workers() -> int:
    env = os.environ.get("NC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError(f"NC_THREADS must be an integer, got {env!r}") from None
    return 1


@dataclass(frozen=True)
class EstimatorSummary:
    name: str
    mean: float
    bias: float
    empirical_sd: float
    mc_se: float
    mean_se: float
    coverage: float
    n_failed: int
    n_ok: int


@dataclass
class SimulationReport:
    config: DgpConfig
    estimators: tuple[str, ...]
    replications: int
    master_seed: int
    truth: float
    results: np.ndarray  # (R, n_estimators, 2): estimate, se
    level: float = 0.95
    summaries: dict[str, EstimatorSummary] = field(default_factory=dict)

    def __post_init__(self):
        if not self.summaries:
            self.summaries = {name: self._summarise(j) for j, name in enumerate(self.estimators)}

    def _summarise(self, j: int) -> EstimatorSummary:
        est, se = self.results[:, j, 0], self.results[:, j, 1]
        ok = np.isfinite(est)
        e = est[ok]
        k = int(ok.sum())
        mean = float(e.mean()) if k else float("nan")
        sd = float(e.std(ddof=1)) if k > 1 else float("nan")
        good_se = ok & np.isfinite(se)
        if good_se.any():
            lo, hi = confidence_interval(est[good_se], se[good_se] ** 2, self.level)
            cov = coverage_probability(np.column_stack([lo, hi]), self.truth)
            mean_se = float(se[good_se].mean())
        else:
            cov, mean_se = float("nan"), float("nan")
        return EstimatorSummary(
            name=self.estimators[j],
            mean=mean,
            bias=mean - self.truth,
            empirical_sd=sd,
            mc_se=sd / np.sqrt(k) if k > 1 else float("nan"),
            mean_se=mean_se,
            coverage=cov,
            n_failed=int(self.replications - k),
            n_ok=k,
        )

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "truth": self.truth,
            "level": self.level,
            "estimators": {name: asdict(s) for name, s in self.summaries.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        c = self.config
        head = (
            f"scenario={c.scenario} eta={c.eta:g} xi={c.xi:g} n={c.n} "
            f"R={self.replications} seed={self.master_seed} truth={self.truth:g}"
        )
        lines = [head, f"{'estimator':<10}{'mean':>10}{'bias':>10}{'sd':>10}{'mean_se':>10}{'coverage':>10}{'failed':>8}"]
        for s in self.summaries.values():
            lines.append(
                f"{s.name:<10}{s.mean:>10.4f}{s.bias:>10.4f}{s.empirical_sd:>10.4f}"
                f"{s.mean_se:>10.4f}{s.coverage:>10.3f}{s.n_failed:>8d}"
            )
        return "\n".join(lines) + "\n"

    def replications_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["replication", "estimator", "estimate", "std_error"])
        for r in range(self.replications):
            for j, name in enumerate(self.estimators):
                out.writerow([r, name, repr(float(self.results[r, j, 0])), repr(float(self.results[r, j, 1]))])
        return buf.getvalue()

    def write(self, directory, stem: str = "report") -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "json": d / f"{stem}.json",
            "table": d / f"{stem}.txt",
            "replications": d / f"{stem}_replications.csv",
        }
        paths["json"].write_text(self.to_json() + "\n")
        paths["table"].write_text(self.to_table())
        paths["replications"].write_text(self.replications_csv())
        return paths


def run_study(
    cfg: DgpConfig,
    estimators=None,
    R: int = 1000,
    master_seed: int = 0,
    *,
    workers: int | None = None,
    ipw_boot: int = 200,
    level: float = 0.95,
) -> SimulationReport:
    """Run ``R`` replications of ``cfg`` and summarise every estimator against the scenario truth.

    Per-replication failures are recorded as NaN and counted. Results do not
    depend on ``workers``.
    """
    if R < 1:
        raise SpecError("need at least one replication")
    estimators = tuple(estimators or DEFAULT_ESTIMATORS[cfg.scenario])
    workers = default_workers() if workers is None else max(1, int(workers))
    results = np.full((R, len(estimators), 2), np.nan)
    if workers == 1:
        for r in range(R):
            results[r] = run_replication(cfg, estimators, master_seed, r, ipw_boot)
    else:
        chunks = [list(range(i, R, workers)) for i in range(workers)]
        args = [(cfg, estimators, master_seed, ch, ipw_boot) for ch in chunks if ch]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, args):
                for r, row in part:
                    results[r] = row
    return SimulationReport(cfg, estimators, R, int(master_seed), cfg.truth, results, level)


# ---------------------------------------------------------------------------
# Non-identification counterexample


@dataclass(frozen=True)
class ExampleSetting:
    """Parameters of ``W = a1 U + s1 e2``, ``X = a2 U + s2 e1``, ``Y = beta X + a3 U + s3 e3``; ``s*`` are variances."""

    beta: float
    alpha1: float
    alpha2: float
    alpha3: float
    var1: float
    var2: float
    var3: float

    def covariance(self) -> np.ndarray:
        """Covariance of ``(X, Y, W)``."""
        b, a1, a2, a3 = self.beta, self.alpha1, self.alpha2, self.alpha3
        vx = a2 * a2 + self.var2
        cxy = b * vx + a2 * a3
        vy = b * b * vx + 2 * b * a2 * a3 + a3 * a3 + self.var3
        cxw = a1 * a2
        cyw = b * a1 * a2 + a1 * a3
        vw = a1 * a1 + self.var1
        return np.array([[vx, cxy, cxw], [cxy, vy, cyw], [cxw, cyw, vw]])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u, e1, e2, e3 = rng.standard_normal((4, n))
        w = self.alpha1 * u + np.sqrt(self.var1) * e2
        x = self.alpha2 * u + np.sqrt(self.var2) * e1
        y = self.beta * x + self.alpha3 * u + np.sqrt(self.var3) * e3
        return np.column_stack([x, y, w])


COUNTEREXAMPLE = (
    ExampleSetting(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0),
    ExampleSetting(-1.0, np.sqrt(3 / 5), np.sqrt(5 / 3), np.sqrt(15.0), 7 / 5, 1 / 3, 2.0),
)
TARGET_COV = np.array([[2.0, 3.0, 1.0], [3.0, 9.0, 2.0], [1.0, 2.0, 2.0]])


def empirical_check(setting: ExampleSetting, n: int, rng: np.random.Generator, target=TARGET_COV) -> dict:
    """Sample covariance at size ``n`` with Monte Carlo standard errors for each entry."""
    d = setting.sample(n, rng)
    d = d - d.mean(axis=0)
    prods = d[:, :, None] * d[:, None, :]
    est = prods.mean(axis=0)
    mcse = prods.std(axis=0, ddof=1) / np.sqrt(n)
    z = np.abs(est - target) / mcse
    return {"covariance": est, "mc_se": mcse, "max_z": float(z.max())}


def counterexample_check(n: int = 1_000_000, seed: int = 0, settings=COUNTEREXAMPLE, tol: float = 1e-10) -> dict:
    """Check that both parameter settings share the covariance of ``(X, Y, W)`` while ``beta`` differs in sign."""
    rng = np.random.default_rng(seed)
    rows = []
    for s in settings:
        cov = s.covariance()
        emp = empirical_check(s, n, rng) if n else None
        rows.append(
            {
                "setting": asdict(s),
                "analytic": cov.tolist(),
                "analytic_ok": bool(np.max(np.abs(cov - TARGET_COV)) <= tol),
                "empirical": None if emp is None else emp["covariance"].tolist(),
                "empirical_max_z": None if emp is None else emp["max_z"],
                "empirical_ok": None if emp is None else bool(emp["max_z"] <= 4.0),
            }
        )
    passed = all(r["analytic_ok"] and r["empirical_ok"] is not False for r in rows)
    return {"target": TARGET_COV.tolist(), "settings": rows, "passed": passed}
