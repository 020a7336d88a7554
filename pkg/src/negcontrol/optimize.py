"""BFGS with an Armijo backtracking line search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool


def bfgs_minimize(fun, grad, x0, *, gtol=1e-8, max_iter=200, c1=1e-4, max_halvings=60) -> MinimizeResult:
    """Minimise ``fun`` from ``x0`` with inverse-Hessian BFGS updates.

    Converged when the infinity norm of the gradient drops below ``gtol``.
    The step length starts at 1 and is halved until the Armijo condition with
    constant ``c1`` holds. The curvature update is skipped when ``s'y <= 0``.
    """
    x = np.asarray(x0, dtype=float).copy()
    f = float(fun(x))
    g = np.asarray(grad(x), dtype=float)
    H = np.eye(x.size)
    first = True
    for it in range(max_iter):
        if np.max(np.abs(g)) < gtol:
            return MinimizeResult(x, f, g, it, True)
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:
            # lost descent direction: restart from steepest descent
            H = np.eye(x.size)
            p, slope = -g, -float(g @ g)
        t = 1.0
        for _ in range(max_halvings):
            x_new = x + t * p
            f_new = float(fun(x_new))
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope:
                break
            t *= 0.5
        else:
            return MinimizeResult(x, f, g, it, False)
        g_new = np.asarray(grad(x_new), dtype=float)
        s, yv = x_new - x, g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if first:
                H = np.eye(x.size) * (sy / float(yv @ yv))
                first = False
            rho = 1.0 / sy
            Hy = H @ yv
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
    converged = bool(np.max(np.abs(g)) < gtol)
    return MinimizeResult(x, f, g, max_iter, converged)
