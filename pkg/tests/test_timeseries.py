import numpy as np
import pytest

from negcontrol import DataError, HacConfig, SeriesFrame, SpecError, analyze_series, build_lagged, simulate_ar1
from negcontrol.simulation import DgpConfig, generate
from negcontrol.timeseries import current_columns, lagged_columns, nc_series_fit, trend_basis


def frame(T=10, k=1, p=1):
    t = np.arange(T, dtype=float)
    return SeriesFrame(t, 100 + t, np.column_stack([1000 + t + 100 * j for j in range(p)]), k=k)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_lag_alignment(k):
    f = frame(T=12, k=k)
    d = build_lagged(f)
    start = max(k, 1)
    assert d.n == 12 - k - start
    i = np.arange(start, 12 - k)
    np.testing.assert_array_equal(d.x, i)
    np.testing.assert_array_equal(d.y, 100 + i)
    np.testing.assert_array_equal(d.z, i + k)
    np.testing.assert_array_equal(d.w, 100 + i - k)
    assert d.v_names == ("x_lag1", "c0", f"c0_lag{k}")
    np.testing.assert_array_equal(d.v[:, 0], i - 1)
    np.testing.assert_array_equal(d.v[:, 1], 1000 + i)
    np.testing.assert_array_equal(d.v[:, 2], 1000 + i - k)


def test_k1_gives_t_minus_2_rows():
    assert build_lagged(frame(T=50)).n == 48


def test_exposure_lags():
    d = build_lagged(frame(T=20), exposure_lags=3)
    assert d.v_names[:3] == ("x_lag1", "x_lag2", "x_lag3")
    np.testing.assert_array_equal(d.x - d.v[:, 2], 3)


def test_column_groups():
    d = build_lagged(frame(T=20, p=2))
    assert [d.v_names[j] for j in lagged_columns(d)] == ["x_lag1", "c0_lag1", "c1_lag1"]
    assert [d.v_names[j] for j in current_columns(d)] == ["x_lag1", "c0", "c1"]


def test_deterministic_covariates_not_lagged():
    B, names = trend_basis(60, harmonics=2)
    f = SeriesFrame(np.arange(60.0), np.arange(60.0) ** 0.5, B, covariate_names=names, deterministic=names)
    d = build_lagged(f)
    assert d.v_names == ("x_lag1", *names)
    with pytest.raises(DataError):
        SeriesFrame([1.0, 2.0], [1.0, 2.0], deterministic=("t",))


def test_too_short():
    with pytest.raises(DataError):
        build_lagged(frame(T=3))
    with pytest.raises(SpecError):
        SeriesFrame([1.0, 2.0], [1.0, 2.0], k=0)


def test_ar1_moments():
    u = simulate_ar1(0.9, 200_000, np.random.default_rng(0))
    assert np.var(u) == pytest.approx(1.0, abs=0.05)
    assert np.corrcoef(u[1:], u[:-1])[0, 1] == pytest.approx(0.9, abs=0.01)
    with pytest.raises(SpecError):
        simulate_ar1(1.0, 10, np.random.default_rng(0))


def test_trend_basis_shape():
    B, names = trend_basis(730, harmonics=4)
    assert B.shape == (730, 10) and len(names) == 10
    assert names[:4] == ("trend1", "trend2", "sin1", "cos1")


def test_analyze_series_recovers_truth():
    f = generate(DgpConfig("timeseries", 0.5, 0.9, 20_000), np.random.default_rng(5))
    rep = analyze_series(f, hac=HacConfig(10))
    beta = rep["nc_gmm"]["beta1"]
    assert beta["name"] == "gamma[x]"
    assert abs(beta["estimate"] - 0.7) < 4 * beta["std_error"]
    assert abs(rep["ols"]["estimate"] - 0.7) > 4 * rep["ols"]["std_error"]
    assert rep["n"] == 20_000 - 2 and rep["confounding_test"]["hac_bandwidth"] == 10


def test_simulated_nc_centered():
    rng = np.random.default_rng(12)
    est = []
    for _ in range(100):
        d = build_lagged(generate(DgpConfig("timeseries", 0.5, 0.8, 1500), rng))
        est.append(nc_series_fit(d, HacConfig(10)).theta_hat[1])
    est = np.array(est)
    assert abs(est.mean() - 0.7) < 4 * est.std(ddof=1) / np.sqrt(est.size)
