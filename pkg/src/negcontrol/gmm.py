"""GMM estimation of bridge parameters with sandwich and Newey-West variances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bridge import MomentSpec, moment_function
from .data import NCDataset, RANK_TOL, ols_fit
from .errors import IdentificationError, NegControlError, SpecError
from .inference import confidence_interval, p_value
from .optimize import bfgs_minimize

GTOL = 1e-8
MAX_ITER = 200


@dataclass(frozen=True)
class HacConfig:
    """Newey-West bandwidth: a fixed ``bandwidth``, or ``floor(c * n**(1/3))`` when it is ``None``."""

    bandwidth: int | None = None
    c: float = 1.3

    def __post_init__(self):
        if self.bandwidth is not None and (int(self.bandwidth) != self.bandwidth or self.bandwidth < 0):
            raise SpecError(f"bandwidth must be a non-negative integer, got {self.bandwidth}")
        if self.c < 0:
            raise SpecError("bandwidth constant must be non-negative")

    def resolve(self, n: int) -> int:
        b = int(self.bandwidth) if self.bandwidth is not None else int(math.floor(self.c * n ** (1.0 / 3.0)))
        if b >= n:
            raise SpecError(f"bandwidth {b} must be smaller than the sample size {n}")
        return b


@dataclass(frozen=True)
class GmmFit:
    theta_hat: np.ndarray
    objective: float
    var_iid: np.ndarray
    converged: bool
    iterations: int
    solver: str
    n: int
    var_hac: np.ndarray | None = None
    hac_bandwidth: int | None = None
    names: tuple[str, ...] = field(default=())

    def std_errors(self, hac: bool | None = None) -> np.ndarray:
        """Standard errors, from the HAC variance when available unless ``hac=False``."""
        use_hac = self.var_hac is not None if hac is None else hac
        var = self.var_hac if use_hac else self.var_iid
        if var is None:
            raise NegControlError("HAC variance was not computed for this fit")
        return np.sqrt(np.clip(np.diag(var), 0.0, None))

    def report(self, level: float = 0.95, hac: bool | None = None) -> dict:
        se = self.std_errors(hac)
        lo, hi = confidence_interval(self.theta_hat, se**2, level)
        pv = p_value(self.theta_hat, se**2)
        names = self.names or tuple(f"theta[{j}]" for j in range(self.theta_hat.size))
        return {
            "solver": self.solver,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "objective": float(self.objective),
            "n": int(self.n),
            "variance": "hac" if (self.var_hac is not None if hac is None else hac) else "iid",
            "hac_bandwidth": self.hac_bandwidth,
            "parameters": [
                {
                    "name": names[j],
                    "estimate": float(self.theta_hat[j]),
                    "std_error": float(se[j]),
                    "ci_lower": float(lo[j]),
                    "ci_upper": float(hi[j]),
                    "p_value": float(pv[j]),
                }
                for j in range(self.theta_hat.size)
            ],
        }


def _weight(weight, m: int) -> np.ndarray:
    if weight is None:
        return np.eye(m)
    W = np.asarray(weight, dtype=float)
    if W.shape != (m, m):
        raise SpecError(f"weight matrix must be {m}x{m}, got {W.shape}")
    if not np.allclose(W, W.T, rtol=1e-12, atol=1e-12):
        raise SpecError("weight matrix must be symmetric")
    try:
        np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise SpecError("weight matrix is not positive definite") from None
    return W


def gmm_objective(spec: MomentSpec, data: NCDataset, theta, weight=None) -> float:
    m = moment_function(spec, data, theta).mean(axis=0)
    W = _weight(weight, m.size)
    return float(m @ W @ m)


def quadratic_form(m, weight) -> float:
    m = np.asarray(m, dtype=float)
    W = _weight(weight, m.size)
    return float(m @ W @ m)


def linear_system(spec: MomentSpec, data: NCDataset) -> tuple[np.ndarray, np.ndarray]:
    """For a linear bridge return ``(G, c)`` with ``m_n(theta) = c - G theta`` exactly."""
    if not spec.bridge.is_linear:
        raise SpecError("linear_system requires a linear bridge")
    n = data.n
    Q = spec.instruments.evaluate(data.x, data.v, data.z)
    Phi = spec.bridge.design(data.w, data.v, data.x)
    A = Q.T @ Phi / n
    c = Q.T @ data.y / n
    if spec.contrast is None:
        return A, c
    x1, x0 = spec.contrast
    dbar = (spec.bridge.design(data.w, data.v, x1) - spec.bridge.design(data.w, data.v, x0)).mean(axis=0)
    G = np.zeros((A.shape[0] + 1, A.shape[1] + 1))
    G[:-1, :-1] = A
    G[-1, :-1] = dbar
    G[-1, -1] = -1.0
    return G, np.append(c, 0.0)


def moment_jacobian(spec: MomentSpec, data: NCDataset, theta, *, numeric: bool = False) -> np.ndarray:
    """``d m_n / d theta`` as an ``(m, dim theta)`` matrix.

    Analytic for linear and multiplicative bridges; central differences with
    step ``1e-6 * max(1, |theta_j|)`` otherwise or when ``numeric=True``.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise NegControlError("non-finite theta")
    gamma, _ = spec.split(theta)
    grad = None if numeric else spec.bridge.gradient(gamma, data.w, data.v, data.x)
    if grad is None:
        J = np.empty((spec.n_moments, theta.size))
        for j in range(theta.size):
            h = 1e-6 * max(1.0, abs(theta[j]))
            up, dn = theta.copy(), theta.copy()
            up[j] += h
            dn[j] -= h
            mu = moment_function(spec, data, up).mean(axis=0)
            md = moment_function(spec, data, dn).mean(axis=0)
            J[:, j] = (mu - md) / (2 * h)
    else:
        Q = spec.instruments.evaluate(data.x, data.v, data.z)
        top = -(Q.T @ grad) / data.n
        if spec.contrast is None:
            J = top
        else:
            x1, x0 = spec.contrast
            d1 = spec.bridge.gradient(gamma, data.w, data.v, x1)
            d0 = spec.bridge.gradient(gamma, data.w, data.v, x0)
            J = np.zeros((spec.n_moments, theta.size))
            J[:-1, :-1] = top
            J[-1, :-1] = -(d1 - d0).mean(axis=0)
            J[-1, -1] = 1.0
    if not np.all(np.isfinite(J)):
        raise NegControlError("non-finite moment Jacobian")
    return J


def _bread(M: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``(M' W M)^{-1} M' W``, through an SVD of ``L' M D^{-1}`` with ``W = L L'``.

    ``D`` holds the column norms so the rank check does not depend on the
    units of individual parameters.
    """
    L = np.linalg.cholesky(W)
    B = L.T @ M
    d = np.linalg.norm(B, axis=0)
    if d.size == 0 or np.any(d == 0):
        raise IdentificationError("singular M' W M: bridge parameters are not identified by these moments")
    U, s, Vt = np.linalg.svd(B / d, full_matrices=False)
    if s[-1] <= RANK_TOL * s[0]:
        raise IdentificationError("singular M' W M: bridge parameters are not identified by these moments")
    return (Vt.T / s / d[:, None]) @ U.T @ L.T


def long_run_covariance(h, bandwidth: int = 0) -> np.ndarray:
    """Bartlett-weighted long-run covariance of the rows of ``h``.

    ``S0 + sum_{i=1}^{b} (1 - i/(b+1)) (S_i + S_i')`` with
    ``S_i = (1/n) sum_{j>i} h_j h_{j-i}'``; ``bandwidth=0`` gives ``h'h/n``.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    n = h.shape[0]
    if bandwidth >= n:
        raise SpecError(f"bandwidth {bandwidth} must be smaller than n={n}")
    S = h.T @ h / n
    for i in range(1, bandwidth + 1):
        Si = h[i:].T @ h[:-i] / n
        S = S + (1.0 - i / (bandwidth + 1.0)) * (Si + Si.T)
    return S


def _sandwich(M, W, S, n) -> np.ndarray:
    B = _bread(M, W)
    V = B @ S @ B.T / n
    return 0.5 * (V + V.T)


def sandwich_variance(spec: MomentSpec, data: NCDataset, fit, weight=None) -> np.ndarray:
    """``S1 S0 S1' / n`` with ``S1 = (M'WM)^{-1} M'W`` and ``S0 = (1/n) sum h h'`` at the estimate."""
    theta = getattr(fit, "theta_hat", fit)
    W = _weight(weight, spec.n_moments)
    M = moment_jacobian(spec, data, theta)
    h = moment_function(spec, data, theta)
    return _sandwich(M, W, h.T @ h / data.n, data.n)


def hac_variance(spec: MomentSpec, data: NCDataset, fit, weight=None, cfg: HacConfig | None = None) -> np.ndarray:
    """Sandwich variance with ``S0`` replaced by its Newey-West long-run version."""
    theta = getattr(fit, "theta_hat", fit)
    cfg = cfg or HacConfig()
    W = _weight(weight, spec.n_moments)
    M = moment_jacobian(spec, data, theta)
    h = moment_function(spec, data, theta)
    return _sandwich(M, W, long_run_covariance(h, cfg.resolve(data.n)), data.n)


def _solve_linear(G: np.ndarray, c: np.ndarray, W: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= RANK_TOL * max(s[0], np.finfo(float).tiny):
        raise IdentificationError("singular moment Jacobian (weak instrument or collinear features)")
    if G.shape[0] == G.shape[1]:
        return np.linalg.solve(G, c)
    L = np.linalg.cholesky(W)
    theta, *_ = np.linalg.lstsq(L.T @ G, L.T @ c, rcond=None)
    return theta


def default_init(spec: MomentSpec, data: NCDataset) -> np.ndarray:
    """OLS-seeded bridge coefficients, zeros elsewhere."""
    theta = np.zeros(spec.n_params)
    if spec.bridge.kind == "custom":
        return theta
    Phi = spec.bridge.design(data.w, data.v, data.x)
    target = data.y
    if spec.bridge.kind == "multiplicative":
        if np.any(data.y <= 0):
            return theta
        target = np.log(data.y)
    try:
        theta[: spec.n_gamma] = ols_fit(Phi, target).coef
    except (IdentificationError, ValueError):
        pass
    return theta


def _param_names(spec: MomentSpec) -> tuple[str, ...]:
    if spec.bridge.features is not None:
        names = [f"gamma[{t}]" for t in spec.bridge.features.terms]
    else:
        names = [f"gamma[{j}]" for j in range(spec.n_gamma)]
    if spec.contrast is not None:
        names.append("delta")
    return tuple(names)


def gmm_fit(
    spec: MomentSpec,
    data: NCDataset,
    weight=None,
    init=None,
    *,
    hac: HacConfig | None = None,
    method: str = "auto",
) -> GmmFit:
    """Minimise ``m_n(theta)' W m_n(theta)``.

    Linear bridges are solved exactly (``method="auto"`` or ``"linear"``);
    everything else, or ``method="quasi_newton"``, goes through BFGS from
    ``init``. Non-convergence is reported through ``converged``, not raised,
    and leaves the variances as NaN.
    Passing ``hac`` also fills ``var_hac``.
    """
    if data.n <= spec.n_params:
        raise IdentificationError(f"n={data.n} must exceed the parameter count {spec.n_params}")
    W = _weight(weight, spec.n_moments)
    if method not in ("auto", "linear", "quasi_newton"):
        raise SpecError(f"unknown method {method!r}")
    if method == "linear" and not spec.bridge.is_linear:
        raise SpecError("exact solve requires a linear bridge")

    if spec.bridge.is_linear and method != "quasi_newton":
        G, c = linear_system(spec, data)
        theta = _solve_linear(G, c, W)
        solver, converged, iterations = "linear_exact", True, 0
    else:
        x0 = default_init(spec, data) if init is None else np.asarray(init, dtype=float)
        spec.split(x0)

        def fun(th):
            return gmm_objective(spec, data, th, W)

        def grad(th):
            m = moment_function(spec, data, th).mean(axis=0)
            return 2.0 * moment_jacobian(spec, data, th).T @ (W @ m)

        res = bfgs_minimize(fun, grad, x0, gtol=GTOL, max_iter=MAX_ITER)
        theta, converged, iterations = res.x, res.converged, res.iterations
        solver = "quasi_newton"

    objective = gmm_objective(spec, data, theta, W)
    bw = hac.resolve(data.n) if hac is not None else None
    if converged:
        var_iid = sandwich_variance(spec, data, theta, W)
        var_hac = hac_variance(spec, data, theta, W, hac) if hac is not None else None
    else:
        # no trustworthy curvature at a point the optimiser could not settle on
        nan = np.full((theta.size, theta.size), np.nan)
        var_iid, var_hac = nan, (nan.copy() if hac is not None else None)
    return GmmFit(
        theta_hat=theta,
        objective=objective,
        var_iid=var_iid,
        converged=bool(converged),
        iterations=int(iterations),
        solver=solver,
        n=data.n,
        var_hac=var_hac,
        hac_bandwidth=bw,
        names=_param_names(spec),
    )
