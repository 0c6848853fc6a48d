"""Damped (Levenberg-Marquardt) nonlinear least squares."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergence


@dataclass
class FitResult:
    params: np.ndarray
    covariance: np.ndarray
    residual: np.ndarray
    cost: float
    iterations: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def numeric_jacobian(fun, p, r0, rel_step=1e-7):
    J = np.empty((r0.size, p.size))
    for k in range(p.size):
        h = rel_step * max(abs(p[k]), 1e-8)
        q = p.copy()
        q[k] += h
        J[:, k] = (fun(q) - r0) / h
    return J


def levenberg_marquardt(fun: Callable[[np.ndarray], np.ndarray], p0,
                        jac: Callable[[np.ndarray], np.ndarray] | None = None, *,
                        max_iter: int = 200, xtol: float = 1e-12, ftol: float = 1e-14,
                        gtol: float = 1e-14, lam0: float = 1e-3) -> FitResult:
    """Minimize sum(fun(p)**2).

    Uses Marquardt's diagonal scaling. The covariance is s^2 (J^T J)^-1 at the
    solution with s^2 = cost / (m - n). Raises NoConvergence when no stopping
    test is met within ``max_iter`` iterations.
    """
    p = np.array(p0, dtype=float)
    jac = jac or (lambda q: numeric_jacobian(fun, q, fun(q)))
    r = np.asarray(fun(p), dtype=float)
    cost = float(r @ r)
    lam = lam0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = np.asarray(jac(p), dtype=float)
        g = J.T @ r
        if np.max(np.abs(g)) <= gtol * max(cost, 1e-300) ** 0.5 * max(np.max(np.abs(J)), 1e-300):
            converged = True
            break
        A = J.T @ J
        d = np.diag(A).copy()
        d[d == 0] = 1.0
        improved = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            q = p + step
            rq = np.asarray(fun(q), dtype=float)
            cq = float(rq @ rq)
            if np.isfinite(cq) and cq <= cost:
                improved = True
                break
            lam *= 10
        if not improved:
            converged = True  # no descent direction left at machine precision
            break
        small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol)
        small_drop = (cost - cq) <= ftol * cost
        p, r, cost = q, rq, cq
        lam = max(lam / 10, 1e-12)
        if small_step or small_drop:
            converged = True
            break
    if not converged:
        raise NoConvergence(f"least squares did not converge in {max_iter} iterations")
    J = np.asarray(jac(p), dtype=float)
    dof = max(r.size - p.size, 1)
    try:
        cov = np.linalg.pinv(J.T @ J) * (cost / dof)
    except np.linalg.LinAlgError:
        cov = np.full((p.size, p.size), np.inf)
    return FitResult(p, cov, r, cost, it)
