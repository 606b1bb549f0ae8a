"""Log-linear Poisson intensity fitting and Wald tests.

Berman–Turner quadrature on the raster grid: every cell centre inside the
window is a dummy point with weight equal to the cell area, data points
enter the log-likelihood sum with zero quadrature weight. The concave
objective

    l(beta) = sum_i eta(x_i) - sum_cells a * exp(eta(cell))

is maximized by damped Newton iterations on standardized covariates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .geom import PointPattern
from .raster import Grid, ScalarField, lookup

__all__ = [
    "ConvergenceError",
    "SingularDesignError",
    "LogLinFit",
    "fit_loglinear",
    "wald_test",
    "loglik",
]

MAX_COEF = 50.0
MAX_STD_SE = 100.0
MAX_CONDITION = 1e8


class ConvergenceError(RuntimeError):
    pass


class SingularDesignError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LogLinFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    intensity: ScalarField
    iterations: int
    gradient_norm: float
    names: tuple[str, ...] = ()

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def summary(self) -> dict:
        names = self.names or tuple(f"C{i}" for i in range(1, len(self.coefficients)))
        se = self.standard_errors
        rows = []
        for i, name in enumerate(("(Intercept)",) + tuple(names)):
            rows.append(
                {
                    "name": name,
                    "estimate": float(self.coefficients[i]),
                    "se": float(se[i]),
                    "p_value": float(wald_test(self, i)) if i > 0 else None,
                }
            )
        return {"coefficients": rows, "iterations": self.iterations, "gradient_norm": self.gradient_norm}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def _design(pattern: PointPattern, covariates, grid: Grid):
    mask = grid.mask.copy()
    for c in covariates:
        mask &= c.mask
    quad = np.column_stack([np.ones(mask.sum())] + [c.values[mask] for c in covariates])
    if pattern.n:
        data = np.column_stack([np.ones(pattern.n)] + [lookup(c, pattern.xy) for c in covariates])
    else:
        data = np.zeros((0, quad.shape[1]))
    return quad, data, mask


def loglik(beta, quad, data, weight) -> float:
    return float((data @ beta).sum() - weight * np.exp(quad @ beta).sum())


def fit_loglinear(
    pattern: PointPattern,
    covariates=(),
    *,
    grid: Grid | None = None,
    names=(),
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogLinFit:
    """Poisson maximum (composite) likelihood fit of ``exp(b0 + sum b_j C_j)``."""
    covariates = tuple(covariates)
    if grid is None:
        grid = covariates[0].grid if covariates else Grid.for_window(pattern.window)
    for c in covariates:
        if not grid.same_geometry(c.grid):
            raise ValueError("covariate grids differ in geometry")
    if pattern.n == 0:
        raise ConvergenceError("empty pattern: intercept diverges to -inf")
    quad, data, mask = _design(pattern, covariates, grid)
    a = grid.cell_area
    p = quad.shape[1]

    # standardize for conditioning; beta = T @ gamma maps back
    center = np.zeros(p)
    scale = np.ones(p)
    if p > 1:
        center[1:] = quad[:, 1:].mean(axis=0)
        scale[1:] = quad[:, 1:].std(axis=0)
        if np.any(scale[1:] <= 0):
            raise SingularDesignError("constant covariate is collinear with the intercept")
    T = np.diag(1.0 / scale)
    T[0, 1:] = -center[1:] / scale[1:]
    zq = (quad - np.r_[0.0, center[1:]]) / scale
    zq[:, 0] = 1.0
    zd = (data - np.r_[0.0, center[1:]]) / scale
    zd[:, 0] = 1.0
    cond = np.linalg.cond(zq.T @ zq)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularDesignError(f"design is (near) singular, condition number {cond:.3g}")

    gamma = np.zeros(p)
    gamma[0] = np.log(pattern.n / (a * quad.shape[0]))
    sum_data = zd.sum(axis=0)
    it = 0
    gnorm = np.inf
    ll = loglik(gamma, zq, zd, a)
    for it in range(1, max_iter + 1):
        mu = a * np.exp(zq @ gamma)
        grad = sum_data - zq.T @ mu
        hess = (zq * mu[:, None]).T @ zq
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            break
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            cand = gamma + t * step
            ll_new = loglik(cand, zq, zd, a)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        gamma = cand
        ll = ll_new
        beta_now = T @ gamma
        if np.any(np.abs(beta_now[1:]) > MAX_COEF) or not np.all(np.isfinite(gamma)):
            raise ConvergenceError("coefficient diverged (separation?)")
    else:
        if gnorm >= max(tol, 1e-6):
            raise ConvergenceError(f"Newton iterations did not converge, |grad| = {gnorm:.3g}")

    mu = a * np.exp(zq @ gamma)
    hess = (zq * mu[:, None]).T @ zq
    cov_gamma = np.linalg.inv(hess)
    # on the standardized scale a healthy fit has se of order n^(-1/2);
    # a huge se means the likelihood keeps rising along some direction
    if np.sqrt(np.diag(cov_gamma)).max() > MAX_STD_SE:
        raise ConvergenceError("likelihood has no finite maximum (quasi-separation)")
    beta = T @ gamma
    cov = T @ cov_gamma @ T.T
    cov = 0.5 * (cov + cov.T)
    if p == 1:
        beta[0] = np.log(pattern.n / (a * quad.shape[0]))
    lam = np.zeros(grid.shape)
    lam[mask] = np.exp(quad @ beta)
    return LogLinFit(
        coefficients=beta,
        covariance=cov,
        intensity=ScalarField(grid, lam, mask),
        iterations=it,
        gradient_norm=gnorm,
        names=tuple(names),
    )


def wald_test(fit: LogLinFit, which: int) -> float:
    """Two-sided normal p-value for ``beta[which] = 0``."""
    est = fit.coefficients[which]
    if est == 0:
        return 1.0
    z = est / np.sqrt(fit.covariance[which, which])
    return float(2.0 * norm.sf(abs(z)))
