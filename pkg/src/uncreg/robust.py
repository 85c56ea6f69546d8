"""Moving-block robust least squares under mean/variance uncertainty.

The estimator scans every contiguous block of n observations (m = T - n + 1
overlapping blocks), fits each block by OLS with intercept, and keeps the
slope of the block with the smallest residual mean square. The de-trended
series w_i = y_i - x_i @ beta then yields interval estimates instead of
points:

* intercept band: (min, max) over blocks of the block means of w;
* variance floor: the winning block's residual mean square;
* variance ceiling: the largest block mean square of w after removing local
  window means (windows of length n1 partition 1..T), which strips the
  slowly-moving intercept component before measuring scatter.

Two scan implementations exist on purpose. The production scan below runs on
rolling sufficient statistics (extended-precision prefix sums, O(T q^2));
the test suite re-derives every block by a direct SVD refit and requires
agreement to 1e-10. Do not merge the two paths.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import ConfigError, Dataset, RankDeficiencyError, UncertaintyEnvelope
from .ols import PIVOT_RTOL

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 20  # n1: centering window for the variance ceiling

MuRule = Literal["block", "midpoint", "lower", "upper"]


@dataclass(frozen=True)
class BlockDiagnostics:
    """Per-block scan record; l is the 1-based block start."""

    l: int
    beta_l: np.ndarray
    mu_l: float
    sigma2_l: float


@dataclass(frozen=True)
class RobustLseFit:
    """Moving-block fit: point slope plus intercept/variance bands."""

    beta_hat: np.ndarray
    envelope: UncertaintyEnvelope
    k_hat: int                     # 1-based start of the winning block
    block_means: np.ndarray        # mean of w over each of the m blocks
    n: int
    n1: int
    skipped_blocks: tuple[int, ...] = ()
    diagnostics: tuple[BlockDiagnostics, ...] | None = None

    @property
    def m(self) -> int:
        return self.block_means.shape[0]

    def predict(self, x, mu_rule: MuRule = "block") -> np.ndarray:
        return predict(self, x, mu_rule)


# ---------------------------------------------------------------------------
# rolling sufficient statistics
# ---------------------------------------------------------------------------

def _prefix(a: np.ndarray) -> np.ndarray:
    """Cumulative sum along axis 0 with a zero row prepended (long double)."""
    out = np.zeros((a.shape[0] + 1,) + a.shape[1:], dtype=np.longdouble)
    np.cumsum(a, axis=0, out=out[1:])
    return out


def _block_sums(prefix: np.ndarray, n: int) -> np.ndarray:
    return prefix[n:] - prefix[:-n]


def _batched_ldl_pivots(a: np.ndarray) -> np.ndarray:
    """Pivots d of the LDL' factorization for a stack of symmetric matrices.

    No pivoting (the inputs are centered Gram matrices, SPD when the block
    design has full rank); a non-positive or collapsed pivot flags the block
    as rank-deficient. Loops over q only, vectorized over the stack.
    """
    m, q, _ = a.shape
    d = np.empty((m, q))
    lower = np.zeros((m, q, q))
    with np.errstate(divide="ignore", invalid="ignore"):
        for j in range(q):
            lj = lower[:, j, :j]
            d[:, j] = a[:, j, j] - np.einsum("mk,mk->m", lj * lj, d[:, :j])
            for i in range(j + 1, q):
                num = a[:, i, j] - np.einsum(
                    "mk,mk->m", lower[:, i, :j] * lj, d[:, :j]
                )
                lower[:, i, j] = num / d[:, j]
    return d


def _scan_blocks(x: np.ndarray, y: np.ndarray, n: int):
    """Per-block OLS over all m = T - n + 1 contiguous blocks.

    Returns (beta (m, q), mu (m,), sigma2 (m,), valid (m,)). Invalid blocks
    (rank-deficient local design) carry NaN coefficients and +inf sigma2 so
    they can never win the argmin.
    """
    t, q = x.shape
    m = t - n + 1
    xl = x.astype(np.longdouble)
    yl = y.astype(np.longdouble)

    px = _prefix(xl)
    py = _prefix(yl)
    pxx = _prefix(xl[:, :, None] * xl[:, None, :])
    pxy = _prefix(xl * yl[:, None])
    pyy = _prefix(yl * yl)

    sx = _block_sums(px, n)          # (m, q)
    sy = _block_sums(py, n)          # (m,)
    sxx = _block_sums(pxx, n)        # (m, q, q)
    sxy = _block_sums(pxy, n)        # (m, q)
    syy = _block_sums(pyy, n)        # (m,)

    cxx = sxx - sx[:, :, None] * sx[:, None, :] / n
    cxy = sxy - sx * (sy / n)[:, None]
    cyy = syy - sy * sy / n

    cxx64 = np.asarray(cxx, dtype=float)
    cxy64 = np.asarray(cxy, dtype=float)

    pivots = _batched_ldl_pivots(cxx64)
    finite = np.all(np.isfinite(pivots), axis=1)
    positive = finite & np.all(pivots > 0.0, axis=1)
    safe_piv = np.where(positive[:, None], pivots, 1.0)
    healthy = safe_piv.min(axis=1) >= PIVOT_RTOL * safe_piv.max(axis=1)
    # a column whose within-block variance is negligible against its raw
    # second moment is numerically constant, i.e. collinear with the intercept
    diag_c = np.diagonal(cxx64, axis1=1, axis2=2)
    diag_s = np.asarray(np.diagonal(sxx, axis1=1, axis2=2), dtype=float)
    informative = np.all(diag_c > PIVOT_RTOL * diag_s, axis=1)
    valid = positive & healthy & informative

    beta = np.full((m, q), np.nan)
    if np.any(valid):
        beta[valid] = np.linalg.solve(cxx64[valid], cxy64[valid][:, :, None])[:, :, 0]

    mu = np.asarray((sy - np.einsum("mq,mq->m", np.nan_to_num(beta), np.asarray(sx, dtype=float))) / n, dtype=float)
    mu[~valid] = np.nan

    sse = np.asarray(cyy, dtype=float) - np.einsum("mq,mq->m", np.nan_to_num(beta), cxy64)
    sigma2 = np.maximum(sse, 0.0) / (n - 1)
    sigma2[~valid] = np.inf
    return beta, mu, sigma2, valid


def _block_means(w: np.ndarray, n: int) -> np.ndarray:
    pw = _prefix(w.astype(np.longdouble))
    return np.asarray(_block_sums(pw, n) / n, dtype=float)


def _window_centered(w: np.ndarray, n1: int) -> np.ndarray:
    """Subtract per-window means; windows are [0, n1), [n1, 2*n1), ...

    The final window keeps whatever remainder is left (length < n1) and is
    centered by its own mean.
    """
    t = w.shape[0]
    ids = np.arange(t) // n1
    counts = np.bincount(ids)
    sums = np.bincount(ids, weights=w)
    return w - (sums / counts)[ids]


# ---------------------------------------------------------------------------
# the estimator
# ---------------------------------------------------------------------------

def default_block_length(t: int, q: int) -> int:
    """Default n: T // 8, clamped into [q + 2, T]."""
    return max(q + 2, min(t, t // 8))


def robust_lse_fit(
    data: Dataset,
    n: int | None = None,
    n1: int | None = None,
    *,
    diagnostics: bool = False,
) -> RobustLseFit:
    """Fit the moving-block robust estimator.

    Parameters
    ----------
    data : sample to fit; row order matters.
    n : block length, q + 2 <= n <= T. Default T // 8 (clamped below by q + 2).
    n1 : centering window for the variance ceiling, 2 <= n1 <= n. Default 20,
        clamped to n when n < 20.
    diagnostics : keep the full per-block scan record on the fit.
    """
    t, q = len(data), data.q
    if n is None:
        n = default_block_length(t, q)
    if n1 is None:
        n1 = min(DEFAULT_WINDOW, n)
    n, n1 = int(n), int(n1)
    if not q + 2 <= n <= t:
        raise ConfigError(f"block length n must satisfy q + 2 = {q + 2} <= n <= T = {t}, got n={n}")
    if not 2 <= n1 <= n:
        raise ConfigError(f"window length n1 must satisfy 2 <= n1 <= n = {n}, got n1={n1}")

    x, y = data.x, data.y
    beta, mu, sigma2, valid = _scan_blocks(x, y, n)
    m = beta.shape[0]
    skipped = tuple(int(l) + 1 for l in np.flatnonzero(~valid))
    if skipped:
        logger.warning(
            "skipped %d of %d rank-deficient block(s); first at l=%d",
            len(skipped), m, skipped[0],
        )
    if not np.any(valid):
        raise RankDeficiencyError(
            f"every block of length {n} has a rank-deficient design; nothing to fit"
        )

    k0 = int(np.argmin(sigma2))  # ties resolve to the smallest block start
    beta_hat = beta[k0].copy()
    sigma2_lo = float(sigma2[k0])

    w = y - x @ beta_hat
    means = _block_means(w, n)
    mu_lo = float(means.min())
    mu_hi = float(means.max())

    wt = _window_centered(w, n1)
    scatter = np.asarray(_block_sums(_prefix((wt * wt).astype(np.longdouble)), n), dtype=float)
    sigma2_hi = float(scatter.max() / (n - 1))

    envelope = UncertaintyEnvelope(
        mu_lo=mu_lo, mu_hi=mu_hi, sigma2_lo=sigma2_lo, sigma2_hi=sigma2_hi
    )
    diag = None
    if diagnostics:
        diag = tuple(
            BlockDiagnostics(l=int(l) + 1, beta_l=beta[l].copy(), mu_l=float(mu[l]), sigma2_l=float(sigma2[l]))
            for l in np.flatnonzero(valid)
        )
    beta_hat.setflags(write=False)
    means.setflags(write=False)
    return RobustLseFit(
        beta_hat=beta_hat,
        envelope=envelope,
        k_hat=k0 + 1,
        block_means=means,
        n=n,
        n1=n1,
        skipped_blocks=skipped,
        diagnostics=diag,
    )


def predict(fit: RobustLseFit, x, mu_rule: MuRule = "block") -> np.ndarray:
    """Point prediction x @ beta_hat + mu under the chosen intercept rule.

    "block" uses the winning block's own intercept (for the winning block the
    OLS intercept equals its mean of w, so it is read off block_means);
    "midpoint" the center of the intercept band; "lower"/"upper" its edges.
    """
    env = fit.envelope
    if mu_rule == "block":
        mu = float(fit.block_means[fit.k_hat - 1])
    elif mu_rule == "midpoint":
        mu = 0.5 * (env.mu_lo + env.mu_hi)
    elif mu_rule == "lower":
        mu = env.mu_lo
    elif mu_rule == "upper":
        mu = env.mu_hi
    else:
        raise ConfigError(f"unknown mu_rule {mu_rule!r}; use block|midpoint|lower|upper")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != fit.beta_hat.shape[0]:
        raise ConfigError(f"x has {x.shape[1]} columns, fit expects {fit.beta_hat.shape[0]}")
    return x @ fit.beta_hat + mu
