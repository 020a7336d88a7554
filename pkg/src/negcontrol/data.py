"""Datasets, sample moments, and the small regression primitives used everywhere else."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DataError, IdentificationError, SeparationError

RANK_TOL = 1e-10


def _as_column(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DataError(f"column {name!r} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"column {name!r} contains non-finite values")
    return arr


@dataclass(frozen=True)
class NCDataset:
    """Columnar sample of exposure, outcome, the two negative controls and covariates.

    ``v`` is always stored as an ``(n, p)`` matrix; ``p`` may be zero.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    v: np.ndarray = field(default=None)
    v_names: tuple[str, ...] = ()

    def __post_init__(self):
        cols = {k: _as_column(getattr(self, k), k) for k in ("x", "y", "z", "w")}
        n = cols["x"].shape[0]
        for name, col in cols.items():
            if col.shape[0] != n:
                raise DataError(f"column {name!r} has length {col.shape[0]}, expected {n}")
        if n < 2:
            raise DataError(f"need at least 2 rows, got {n}")
        v = self.v
        if v is None:
            v = np.empty((n, 0))
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != n:
            raise DataError(f"covariate matrix must have {n} rows, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("covariate matrix contains non-finite values")
        names = tuple(self.v_names) or tuple(f"v{j}" for j in range(v.shape[1]))
        if len(names) != v.shape[1]:
            raise DataError(f"{len(names)} covariate names for {v.shape[1]} columns")
        for name, col in cols.items():
            col.setflags(write=False)
            object.__setattr__(self, name, col)
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "v_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.v.shape[1]

    def take(self, idx) -> "NCDataset":
        """Rows ``idx`` as a new dataset (used for bootstrap resampling and replication)."""
        idx = np.asarray(idx)
        return NCDataset(self.x[idx], self.y[idx], self.z[idx], self.w[idx], self.v[idx], self.v_names)

    def covariances(self) -> "CovarianceSummary":
        return CovarianceSummary.from_data(self)


def sample_cov(a, b) -> float:
    """Plug-in sample covariance with divisor ``n``.

    >>> sample_cov([1, 2, 3], [1, 2, 3])
    0.6666666666666666
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise DataError("sample covariance needs n >= 2")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DataError("non-finite input to sample_cov")
    return float(np.mean((a - a.mean()) * (b - b.mean())))


@dataclass(frozen=True)
class CovarianceSummary:
    """Pairwise sample covariances among X, Y, Z, W (divisor n)."""

    xx: float
    xy: float
    xz: float
    xw: float
    zy: float
    zw: float
    zz: float
    yy: float = float("nan")
    ww: float = float("nan")

    @classmethod
    def from_data(cls, data: NCDataset) -> "CovarianceSummary":
        c = sample_cov
        return cls(
            xx=c(data.x, data.x), xy=c(data.x, data.y), xz=c(data.x, data.z),
            xw=c(data.x, data.w), zy=c(data.z, data.y), zw=c(data.z, data.w),
            zz=c(data.z, data.z), yy=c(data.y, data.y), ww=c(data.w, data.w),
        )

    def get(self, a: str, b: str) -> float:
        key = a + b
        if hasattr(self, key):
            return getattr(self, key)
        return getattr(self, b + a)


@dataclass(frozen=True)
class OLSResult:
    coef: np.ndarray
    resid: np.ndarray
    # (X'X)^{-1}, kept for standard errors
    xtx_inv: np.ndarray

    @property
    def n(self) -> int:
        return self.resid.shape[0]

    def classical_cov(self) -> np.ndarray:
        k = self.coef.shape[0]
        s2 = float(self.resid @ self.resid) / (self.n - k)
        return s2 * self.xtx_inv


def ols_fit(design, response) -> OLSResult:
    """Least squares through a pivoted QR factorisation.

    Raises ``IdentificationError`` when the design is rank deficient relative to
    ``1e-10`` times its largest column norm.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise DataError(f"response has shape {y.shape}, expected ({n},)")
    if n <= k:
        raise IdentificationError(f"need more rows than columns (n={n}, k={k})")
    Q, R, piv = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = max(float(np.max(np.linalg.norm(X, axis=0))), np.finfo(float).tiny)
    if diag.size == 0 or diag.min() <= RANK_TOL * scale:
        raise IdentificationError("design matrix is rank deficient")
    coef_p = sla.solve_triangular(R, Q.T @ y)
    coef = np.empty(k)
    coef[piv] = coef_p
    r_inv = sla.solve_triangular(R, np.eye(k))
    xtx_inv_p = r_inv @ r_inv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_p
    return OLSResult(coef=coef, resid=y - X @ coef, xtx_inv=xtx_inv)


def logistic_fit(design, labels, *, tol: float = 1e-8, max_iter: int = 100) -> np.ndarray:
    """Bernoulli maximum likelihood by iteratively reweighted least squares.

    Stops once the largest absolute score entry falls below ``tol``.
    A coefficient vector whose norm exceeds 1e6, or fitted probabilities that
    reproduce every label to within 1e-6, is treated as separation.
    """
    X = np.asarray(design, dtype=float)
    t = np.asarray(labels, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all((t == 0) | (t == 1)):
        raise DataError("labels must be 0/1")
    if t.min() == t.max():
        raise DataError("labels contain a single class")
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        eta = X @ beta
        p = 0.5 * (1.0 + np.tanh(0.5 * eta))
        score = X.T @ (t - p)
        if np.max(np.abs(score)) < tol:
            break
        wts = p * (1.0 - p)
        info = X.T @ (X * wts[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise SeparationError("singular information matrix in logistic fit") from exc
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > 1e6:
            raise SeparationError("logistic coefficients diverge (perfect separation)")
    p = 0.5 * (1.0 + np.tanh(0.5 * (X @ beta)))
    if np.max(np.abs(t - p)) < 1e-6:
        raise SeparationError("fitted probabilities reproduce the labels (perfect separation)")
    return beta


def read_csv(
    path,
    column_map: Mapping[str, object],
    transforms: Mapping[str, str] | None = None,
) -> NCDataset:
    """Load an :class:`NCDataset` from a header-first, comma-delimited file.

    ``column_map`` maps the roles ``x``, ``y``, ``z``, ``w`` to column names and
    ``v`` to a sequence of names. ``transforms`` maps a role to ``"sqrt"``.
    """
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]

    roles = {role: column_map[role] for role in ("x", "y", "z", "w")}
    v_cols: Sequence[str] = tuple(column_map.get("v") or ())
    wanted = list(roles.values()) + list(v_cols)
    missing = [c for c in wanted if c not in header]
    if missing:
        raise DataError(f"missing column(s) {missing} in {path}")
    pos = {name: header.index(name) for name in wanted}

    def column(name: str) -> np.ndarray:
        out = np.empty(len(rows))
        j = pos[name]
        for i, row in enumerate(rows):
            try:
                val = float(row[j])
            except (ValueError, IndexError):
                cell = row[j] if j < len(row) else ""
                raise DataError(f"unparseable cell {cell!r} at row {i + 2}, column {name!r}") from None
            if not math.isfinite(val):
                raise DataError(f"non-finite value at row {i + 2}, column {name!r}")
            out[i] = val
        return out

    cols = {role: column(name) for role, name in roles.items()}
    v = np.column_stack([column(c) for c in v_cols]) if v_cols else np.empty((len(rows), 0))
    for role, how in (transforms or {}).items():
        if how != "sqrt":
            raise DataError(f"unknown transform {how!r}")
        if role == "v":
            if np.any(v < 0):
                raise DataError("sqrt transform of negative covariate")
            v = np.sqrt(v)
            continue
        if np.any(cols[role] < 0):
            raise DataError(f"sqrt transform of negative values in column {roles[role]!r}")
        cols[role] = np.sqrt(cols[role])
    return NCDataset(v=v, v_names=tuple(v_cols), **cols)


def write_csv(data: NCDataset, path) -> None:
    """Write ``data`` with header ``x,y,z,w,<v names>``; floats use ``repr`` so reads round-trip."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        out = csv.writer(handle)
        out.writerow(["x", "y", "z", "w", *data.v_names])
        for i in range(data.n):
            row = [data.x[i], data.y[i], data.z[i], data.w[i], *data.v[i]]
            out.writerow([repr(float(val)) for val in row])
