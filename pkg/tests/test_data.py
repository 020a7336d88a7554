import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from negcontrol import DataError, IdentificationError, NCDataset, SeparationError
from negcontrol.data import logistic_fit, ols_fit, read_csv, sample_cov, write_csv


@pytest.mark.parametrize(
    "a, b, expected",
    [([1, 2, 3], [1, 2, 3], 2 / 3), ([1, 2, 3], [3, 3, 3], 0.0), ([1, -1], [-1, 1], -1.0)],
)
def test_sample_cov_examples(a, b, expected):
    assert sample_cov(a, b) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "a, b",
    [([1, 2, 3], [1, 2]), ([1.0], [1.0]), ([1, np.nan], [1, 2]), ([1, np.inf], [1, 2])],
)
def test_sample_cov_rejects(a, b):
    with pytest.raises(DataError):
        sample_cov(a, b)


def test_sample_cov_variance_statistical(rng):
    n = 20_000
    a = rng.normal(scale=2.0, size=n)
    # var of the n-divisor estimator of sigma^2=4 for Gaussian data is about 2 sigma^4 / n
    mc_se = np.sqrt(2 * 16 / n)
    assert abs(sample_cov(a, a) - 4.0) < 4 * mc_se


@given(arrays(float, st.integers(2, 30), elements=st.floats(-1e3, 1e3)))
def test_sample_cov_symmetric_nonnegative(a):
    b = a[::-1].copy()
    assert sample_cov(a, b) == pytest.approx(sample_cov(b, a), rel=1e-12, abs=1e-9)
    assert sample_cov(a, a) >= 0


def test_dataset_rejects_nonfinite_and_ragged():
    with pytest.raises(DataError):
        NCDataset([1, 2], [1, np.nan], [1, 2], [1, 2])
    with pytest.raises(DataError):
        NCDataset([1, 2, 3], [1, 2], [1, 2], [1, 2])
    with pytest.raises(DataError):
        NCDataset([1], [1], [1], [1])
    with pytest.raises(DataError):
        NCDataset([1, 2], [1, 2], [1, 2], [1, 2], v=[[1.0], [np.inf]])


def test_dataset_is_immutable():
    d = NCDataset([1, 2], [3, 4], [5, 6], [7, 8])
    assert d.n == 2 and d.p == 0
    with pytest.raises(ValueError):
        d.x[0] = 5


def test_ols_examples():
    fit = ols_fit([[1, 0], [1, 1], [1, 2]], [1, 3, 5])
    np.testing.assert_allclose(fit.coef, [1, 2], atol=1e-12)
    np.testing.assert_allclose(ols_fit([[1], [1], [1]], [4, 4, 4]).coef, [4])
    with pytest.raises(IdentificationError):
        ols_fit([[1, 1], [1, 1], [1, 1]], [1, 2, 3])


def test_ols_noiseless_recovery_and_orthogonality(rng):
    X = np.column_stack([np.ones(50), rng.standard_normal((50, 3))])
    beta = np.array([0.3, -1.0, 2.5, 4.0])
    np.testing.assert_allclose(ols_fit(X, X @ beta).coef, beta, atol=1e-10)
    y = X @ beta + rng.standard_normal(50)
    fit = ols_fit(X, y)
    np.testing.assert_allclose(X.T @ fit.resid, 0, atol=1e-9)


def test_logistic_examples():
    one = np.ones((4, 1))
    np.testing.assert_allclose(logistic_fit(one, [0, 1, 0, 1]), [0.0], atol=1e-10)
    np.testing.assert_allclose(logistic_fit(one, [1, 1, 1, 0]), [np.log(3)], atol=1e-10)
    with pytest.raises(DataError):
        logistic_fit(one, [1, 1, 1, 1])


def test_logistic_score_zero(rng):
    X = np.column_stack([np.ones(400), rng.standard_normal((400, 2))])
    t = (rng.random(400) < 1 / (1 + np.exp(-(X @ [0.2, 1.0, -0.5])))).astype(float)
    beta = logistic_fit(X, t)
    p = 1 / (1 + np.exp(-(X @ beta)))
    assert np.max(np.abs(X.T @ (t - p))) < 1e-6


def test_logistic_separation():
    x = np.array([-2.0, -1.0, 1.0, 2.0])
    with pytest.raises(SeparationError):
        logistic_fit(np.column_stack([np.ones(4), x]), [0, 0, 1, 1])


def test_read_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y,z,w\n1,4,0,1\n2,9,1,2\n3,16,0,5\n")
    d = read_csv(path, {"x": "x", "y": "y", "z": "z", "w": "w"})
    assert d.n == 3 and d.p == 0
    np.testing.assert_array_equal(d.y, [4, 9, 16])
    with pytest.raises(DataError, match="missing"):
        read_csv(path, {"x": "x", "y": "u", "z": "z", "w": "w"})
    d2 = read_csv(path, {"x": "x", "y": "y", "z": "z", "w": "w"}, {"y": "sqrt"})
    np.testing.assert_array_equal(d2.y, [2, 3, 4])


def test_read_csv_bad_cell(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y,z,w\n1,4,0,1\n2,oops,1,2\n")
    with pytest.raises(DataError, match=r"row 3, column 'y'"):
        read_csv(path, {"x": "x", "y": "y", "z": "z", "w": "w"})
    path.write_text("x,y,z,w\n1,4,0,1\n2,nan,1,2\n")
    with pytest.raises(DataError, match="non-finite"):
        read_csv(path, {"x": "x", "y": "y", "z": "z", "w": "w"})


def test_csv_round_trip(tmp_path, dataset):
    path = tmp_path / "rt.csv"
    write_csv(dataset, path)
    back = read_csv(path, {"x": "x", "y": "y", "z": "z", "w": "w", "v": list(dataset.v_names)})
    for col in ("x", "y", "z", "w", "v"):
        np.testing.assert_array_equal(getattr(back, col), getattr(dataset, col))
    assert back.v_names == dataset.v_names
