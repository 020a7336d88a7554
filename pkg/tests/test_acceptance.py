"""End-to-end acceptance checks.

Each test prints one PASS/FAIL line (also repeated in the terminal summary)
before asserting. Monte Carlo studies use 1000 replications and a single
master seed fixed in advance; studies shared between criteria are cached.
"""

from functools import lru_cache

import numpy as np
import pytest

from negcontrol import (
    HacConfig,
    binary_nc_adjust,
    builtin_spec,
    explain_away_threshold,
    gmm_fit,
    hac_variance,
    moment_jacobian,
    nc_estimate,
    nc_tsls,
    positive_control_adjust,
    sandwich_variance,
)
from negcontrol.bridge import BridgeModel, InstrumentMap, MomentSpec, bridge_features, instrument_features
from negcontrol.cli import main
from negcontrol.gmm import long_run_covariance
from negcontrol.simulation import DgpConfig, counterexample_check, run_study
from negcontrol.summary import RiskDifferenceSummary

from _oracles import enumerate_binary_u
from conftest import random_dataset

pytestmark = pytest.mark.slow

R = 1000
SEED = 20180412
EPS = 1e-12  # coverages are multiples of 1/R; absorbs float noise in the difference


@lru_cache(maxsize=None)
def study(scenario, eta, xi, n, estimators):
    return run_study(DgpConfig(scenario, eta, xi, n), estimators, R=R, master_seed=SEED, ipw_boot=0)


def summary(scenario, eta, xi, n, name, estimators):
    return study(scenario, eta, xi, n, estimators).summaries[name]


BIN = ("nc", "ols", "ipw")
STR = ("nc", "ols", "iv")
TS = ("nc", "ols", "ols_lag")


def test_table1_binary_coverage(acceptance_line):
    targets = {(0.5, 0.6, 500): 0.945, (0.5, 0.6, 1500): 0.936, (0.0, 0.2, 500): 0.978, (0.0, 0.2, 1500): 0.979}
    cells = []
    for (eta, xi, n), target in targets.items():
        cov = summary("binary_exposure", eta, xi, n, "nc", BIN).coverage
        cells.append((eta, xi, n, cov, target, abs(cov - target) <= 0.03 + EPS))
    ok = all(c[-1] for c in cells)
    detail = "; ".join(f"eta={e} xi={x} n={n}: {c:.3f} vs {t:.3f}" for e, x, n, c, t, _ in cells)
    acceptance_line(1, ok, f"binary NC coverage within 0.03 of reference values ({detail})")
    assert ok


STRUCT_VALID = [(0.0, 0.0), (0.3, 0.0), (0.5, 0.0), (0.0, 0.4), (0.0, 0.6)]  # (eta, xi)


def test_table2_structural_coverage(acceptance_line):
    cells = []
    for eta, xi in STRUCT_VALID:
        for n in (500, 1500):
            cov = summary("structural_continuous", eta, xi, n, "nc", STR).coverage
            cells.append((eta, xi, n, cov, abs(cov - 0.95) <= 0.03 + EPS))
    degraded = summary("structural_continuous", 0.5, 0.6, 1500, "nc", STR).coverage
    ok_deg = abs(degraded - 0.473) <= 0.05 + EPS
    ok = all(c[-1] for c in cells) and ok_deg
    worst = max(cells, key=lambda c: abs(c[3] - 0.95))
    acceptance_line(
        2, ok,
        f"structural NC coverage in [0.92, 0.98] for all 10 valid cells (worst {worst[3]:.3f} at "
        f"eta={worst[0]} xi={worst[1]} n={worst[2]}); degraded cell {degraded:.3f} vs 0.473 +- 0.05",
    )
    assert ok


def test_table3_timeseries(acceptance_line):
    targets = {0.0: 0.947, 0.3: 0.950, 0.5: 0.947}
    parts, ok = [], True
    for eta, target in targets.items():
        s = summary("timeseries", eta, 0.9, 1500, "nc", TS)
        cov_ok = abs(s.coverage - target) <= 0.03 + EPS
        centred = abs(s.mean - 0.7) < 4 * s.mc_se
        ok &= cov_ok and centred
        parts.append(f"eta={eta}: cov {s.coverage:.3f} vs {target:.3f}, mean {s.mean:.4f} ({s.bias / s.mc_se:+.1f} MC-SE)")
    acceptance_line(3, ok, "time-series NC coverage and centring at 0.7 (" + "; ".join(parts) + ")")
    assert ok


def _bias_z(s):
    return s.bias / s.mc_se


def test_bias_patterns(acceptance_line):
    nc_cells, failures = [], []
    for xi in (0.6, 0.4, 0.2):
        for eta in (0.5, 0.3, 0.0):
            nc_cells.append(("binary_exposure", eta, xi, BIN))
    for eta, xi in STRUCT_VALID:
        nc_cells.append(("structural_continuous", eta, xi, STR))
    for xi in (0.9, 0.8, 0.7):
        for eta in (0.5, 0.3, 0.0):
            nc_cells.append(("timeseries", eta, xi, TS))
    for scenario, eta, xi, ests in nc_cells:
        z = _bias_z(summary(scenario, eta, xi, 1500, "nc", ests))
        if abs(z) >= 4:
            failures.append(f"NC {scenario} eta={eta} xi={xi}: {z:+.1f}")
    for scenario, xis, ests in (("binary_exposure", (0.6, 0.4, 0.2), BIN),
                                ("structural_continuous", (0.0, 0.4, 0.6), STR),
                                ("timeseries", (0.9, 0.8, 0.7), TS)):
        for xi in xis:
            for eta in (0.5, 0.3):
                z = _bias_z(summary(scenario, eta, xi, 1500, "ols", ests))
                if abs(z) <= 4:
                    failures.append(f"OLS {scenario} eta={eta} xi={xi}: {z:+.1f}")
    for xi in (0.6, 0.4, 0.2):
        z = _bias_z(summary("binary_exposure", 0.5, xi, 1500, "ipw", BIN))
        if abs(z) <= 4:
            failures.append(f"IPW binary eta=0.5 xi={xi}: {z:+.1f}")
    ok = not failures
    detail = (f"NC |bias| < 4 MC-SE in {len(nc_cells)} valid cells, OLS biased for eta>0, IPW biased at eta=0.5"
              + ("" if ok else f"; violations (bias / MC-SE): {', '.join(failures)}"))
    acceptance_line(4, ok, detail)
    assert ok


def test_double_robustness(acceptance_line):
    z = {cell: _bias_z(summary("structural_continuous", *cell, 1500, "nc", STR))
         for cell in ((0.0, 0.4), (0.5, 0.0), (0.5, 0.6))}
    ok = abs(z[(0.0, 0.4)]) < 4 and abs(z[(0.5, 0.0)]) < 4 and abs(z[(0.5, 0.6)]) > 4
    acceptance_line(
        5, ok,
        f"NC bias / MC-SE: eta=0 xi=0.4 {z[(0.0, 0.4)]:+.1f}, eta=0.5 xi=0 {z[(0.5, 0.0)]:+.1f} (unbiased arms); "
        f"eta=0.5 xi=0.6 {z[(0.5, 0.6)]:+.1f} (biased)",
    )
    assert ok


def test_tsls_identity(acceptance_line):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        d = random_dataset(rng, n=int(rng.integers(30, 400)), p=int(rng.integers(1, 3)))
        worst = max(worst, abs(nc_tsls(d).value - nc_estimate(d).value))
    ok = worst < 1e-10
    acceptance_line(6, ok, f"modified TSLS equals NC ratio on 100 fixtures, max |diff| = {worst:.2e}")
    assert ok


def test_example10(acceptance_line):
    s = RiskDifferenceSummary(rd_xy_given_z=-150.0, rd_xw_given_z=0.15,
                              averaged_rd_zy_given_x=-10.0, averaged_rd_zw_given_x=0.11)
    res = positive_control_adjust(s)
    thr = explain_away_threshold(s)
    g2_err = abs(res.gamma2 - (-10 / 0.11))
    ok = g2_err < 1e-9 and abs(res.gamma1 - (-136.3636363636)) < 1e-6 and abs(thr + 1.5) <= 0.01
    acceptance_line(7, ok, f"gamma2 = {res.gamma2:.6f} (err {g2_err:.1e}), gamma1 = {res.gamma1:.4f}, "
                           f"threshold = {thr:.4f}")
    assert ok


def test_counterexample(acceptance_line):
    res = counterexample_check(n=1_000_000, seed=SEED)
    analytic = all(r["analytic_ok"] for r in res["settings"])
    zs = [r["empirical_max_z"] for r in res["settings"]]
    ok = res["passed"] and analytic
    acceptance_line(8, ok, f"both settings give [[2,3,1],[3,9,2],[1,2,2]] analytically to 1e-10: {analytic}; "
                           f"empirical max |z| at n=1e6: {zs[0]:.2f}, {zs[1]:.2f}")
    assert ok


def test_oracle_equivalence(acceptance_line):
    rng = np.random.default_rng(7)
    worst = {}
    for interaction in (True, False):
        worst[interaction] = max(
            abs(binary_nc_adjust(s, interaction=interaction).ace - truth)
            for s, truth in (enumerate_binary_u(rng, interaction) for _ in range(100))
        )
    ok = max(worst.values()) < 1e-10
    acceptance_line(9, ok, f"binary_nc_adjust vs enumeration on 100 + 100 models, max |diff| "
                           f"{worst[True]:.1e} (interaction), {worst[False]:.1e} (additive)")
    assert ok


def test_numerical_checks(acceptance_line):
    rng = np.random.default_rng(8)
    d = random_dataset(rng, n=300, binary_x=True)
    specs = [
        builtin_spec("structural"),
        builtin_spec("binary_interaction", 1, contrast=(1.0, 0.0)),
        MomentSpec(BridgeModel("multiplicative", bridge_features(["1", "x", "w", "x*w"])),
                   InstrumentMap(instrument_features(["1", "x", "z", "x*z"])), (1.0, 0.0)),
    ]
    jac = max(
        float(np.max(np.abs(moment_jacobian(sp, d, th) - moment_jacobian(sp, d, th, numeric=True))))
        for sp in specs for th in (0.1 * rng.standard_normal(sp.n_params) for _ in range(5))
    )
    sp = builtin_spec("binary_interaction", 1, contrast=(1.0, 0.0))
    fit = gmm_fit(sp, d)
    same = np.array_equal(hac_variance(sp, d, fit, cfg=HacConfig(0)), sandwich_variance(sp, d, fit))
    hand = float(long_run_covariance(np.array([1.0, 2.0, 3.0]), 1)[0, 0])
    ok = jac < 1e-6 and same and abs(hand - 22 / 3) < 1e-12
    acceptance_line(10, ok, f"max |analytic - FD Jacobian| = {jac:.1e}; HAC(b=0) == sandwich: {same}; "
                            f"scalar HAC = {hand!r} vs 22/3")
    assert ok


def test_simulate_determinism(acceptance_line, tmp_path):
    base = ["simulate", "--scenario", "binary_exposure", "--eta", "0.5", "--xi", "0.6", "--n", "300",
            "--reps", "24", "--seed", str(SEED), "--ipw-boot", "20"]
    dirs = [tmp_path / name for name in ("serial1", "serial2", "parallel")]
    codes = [main([*base, "--out-dir", str(dirs[0]), "--workers", "1"]),
             main([*base, "--out-dir", str(dirs[1]), "--workers", "1"]),
             main([*base, "--out-dir", str(dirs[2]), "--workers", "3"])]
    files = ("report.json", "report.txt", "report_replications.csv")
    same = all(len({(d / f).read_bytes() for d in dirs}) == 1 for f in files)
    ok = codes == [0, 0, 0] and same
    acceptance_line(11, ok, f"cmd_simulate report files identical across two serial runs and a 3-worker run: {same}")
    assert ok
