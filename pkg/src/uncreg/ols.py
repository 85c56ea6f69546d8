"""Ordinary least squares with intercept, via centered normal equations.

This is both the baseline estimator in the benchmarks and the per-block
workhorse inside the moving-block robust fit, so the conventions here are
load-bearing:

* the intercept is always estimated but reported separately from the slope
  vector (the robust fit treats the two differently);
* ``mse`` divides the residual sum of squares by (n - 1), not (n - q - 1);
  the block scan compares this quantity across equal-sized blocks, so only
  the shared divisor matters, and downstream variance envelopes inherit it;
* rank problems are an error, never a silent pseudo-inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, Dataset, RankDeficiencyError

# Relative pivot floor: a fit is rejected as rank-deficient when the smallest
# pivot of the factored (centered) Gram matrix drops below PIVOT_RTOL times
# the largest.
PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class OlsFit:
    """Result of a least-squares fit y ~ x @ beta + mu."""

    beta: np.ndarray
    mu: float
    mse: float        # sum of squared residuals / (n - 1)
    r2: float
    f_stat: float     # at the default df (q, n - q - 1); inf when r2 == 1
    n: int

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.beta + self.mu


def _solve_centered(cxx: np.ndarray, cxy: np.ndarray) -> np.ndarray:
    """Solve the centered normal equations, checking pivot health.

    cxx is the centered Gram matrix (q, q), cxy the centered cross-moment
    (q,). A Cholesky factorization (cxx is symmetric PSD by construction)
    is the rank check: failure or a collapsed pivot means some covariate is
    (numerically) constant or collinear within the sample. The solve itself
    goes straight through cxx so a one-covariate fit is a single division
    (exact when y is a multiple of the centered covariate).
    """
    try:
        chol = np.linalg.cholesky(cxx)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(
            "design matrix is rank-deficient (a covariate is constant or collinear)"
        ) from None
    pivots = np.diag(chol) ** 2
    if pivots.min() < PIVOT_RTOL * pivots.max():
        j = int(np.argmin(pivots))
        raise RankDeficiencyError(
            f"design matrix is numerically rank-deficient: pivot for column {j + 1} "
            f"is {pivots.min():.3e} vs largest {pivots.max():.3e}"
        )
    return np.linalg.solve(cxx, cxy)


def ols_fit(data: Dataset) -> OlsFit:
    """Fit y = x @ beta + mu + eps by least squares.

    Requires n >= q + 2 so the (n - 1) mean square has at least one
    residual degree of freedom beyond the fitted parameters.
    """
    n, q = len(data), data.q
    if n < q + 2:
        raise ConfigError(f"need at least q + 2 = {q + 2} rows, got {n}")
    x, y = data.x, data.y
    xbar = x.mean(axis=0)
    ybar = y.mean()
    xc = x - xbar
    yc = y - ybar
    cxx = xc.T @ xc
    cxy = xc.T @ yc
    beta = _solve_centered(cxx, cxy)
    mu = float(ybar - beta @ xbar)

    resid = y - x @ beta - mu
    sse = float(resid @ resid)
    sst = float(yc @ yc)
    mse = sse / (n - 1)
    if sst == 0.0:
        # constant response: slope and scatter are all zero by convention
        r2 = 0.0
    else:
        r2 = min(max(1.0 - sse / sst, 0.0), 1.0)
    if r2 == 1.0:
        f = math.inf
    else:
        f = f_from_r2(r2, q, n - q - 1)
    return OlsFit(beta=beta, mu=mu, mse=mse, r2=r2, f_stat=f, n=n)


def f_from_r2(r2: float, df_num: int, df_den: int) -> float:
    """F statistic (r2/df_num) / ((1 - r2)/df_den) for testing the slope."""
    if not 0.0 <= r2 < 1.0:
        raise ConfigError(f"F statistic needs 0 <= r2 < 1, got {r2} (r2 == 1 is a perfect fit)")
    if df_num < 1 or df_den < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got ({df_num}, {df_den})")
    return (r2 / df_num) / ((1.0 - r2) / df_den)


def f_statistic(fit: OlsFit, df_num: int | None = None, df_den: int | None = None) -> float:
    """F statistic of a fit, by default at (q, n - q - 1).

    Pass explicit degrees of freedom to reproduce other conventions, e.g.
    (q + 1, n - q - 2) when the intercept is counted as a tested restriction.
    """
    q = int(fit.beta.shape[0])
    if df_num is None:
        df_num = q
    if df_den is None:
        df_den = fit.n - q - 1
    return f_from_r2(fit.r2, df_num, df_den)
