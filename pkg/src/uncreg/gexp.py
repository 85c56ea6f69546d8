"""Sublinear expectation of terminal payoffs under variance uncertainty.

Computes E[phi(B_h + shift)] where B is the canonical process whose variance
per unit time is only known to lie in [sigma2_lo, sigma2_hi]. Three routes:

* ``gexp_pde``: the generator-heat equation du/dt = G(d2u/dx2) with
  G(a) = (sigma2_hi * a^+ - sigma2_lo * a^-) / 2, marched by explicit
  central differences from u(0, .) = phi; the answer is u(horizon, shift).
* ``gexp_dp``: a discrete-time dynamic program that, at each of `steps`
  stages, takes the worst-case (maximizing) variance over the two band
  endpoints, integrating the one-step Gaussian expectation by Gauss-Hermite
  quadrature on the same spatial grid. Restricting the stage choice to the
  band endpoints is a modeling decision: it is exact for payoffs whose value
  function stays convex or concave (all the polynomial oracles used in
  tests) and a lower bound otherwise.
* ``gexp_mc_lower_bound``: plain Monte Carlo under one constant variance in
  the band; a lower bound because the sublinear expectation dominates every
  constant-variance law.

The PDE and DP routes are independent implementations kept as mutual
oracles; tests require them to agree. Do not refactor one in terms of the
other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ConfigError, DataError, SeededRng, StabilityError

DEFAULT_NX = 801
DEFAULT_HALF_WIDTH_SIGMAS = 8.0   # grid half-width in units of sigma_hi * sqrt(horizon)
STABILITY_MARGIN = 0.5            # dt = margin * dx^2 / sigma2_hi

PAYOFF_NAMES = (
    "linear",
    "quadratic",
    "neg_quadratic",
    "quartic",
    "capped_quadratic",
    "call",
)


def builtin_payoff(name: str, strike: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized payoff from the built-in family; `strike` only affects call."""
    if name == "linear":
        return lambda z: np.asarray(z, dtype=float)
    if name == "quadratic":
        return lambda z: np.square(np.asarray(z, dtype=float))
    if name == "neg_quadratic":
        return lambda z: -np.square(np.asarray(z, dtype=float))
    if name == "quartic":
        return lambda z: np.square(np.square(np.asarray(z, dtype=float)))
    if name == "capped_quadratic":
        return lambda z: np.minimum(np.square(np.asarray(z, dtype=float)), 1.0)
    if name == "call":
        return lambda z: np.maximum(np.asarray(z, dtype=float) - strike, 0.0)
    raise ConfigError(f"unknown payoff {name!r}; choose from {PAYOFF_NAMES}")


def g_function(a, sigma2_lo: float, sigma2_hi: float):
    """G(a) = (sigma2_hi * a^+ - sigma2_lo * a^-) / 2, elementwise."""
    _check_band(sigma2_lo, sigma2_hi)
    a = np.asarray(a, dtype=float)
    val = 0.5 * (sigma2_hi * np.maximum(a, 0.0) - sigma2_lo * np.maximum(-a, 0.0))
    return float(val) if val.ndim == 0 else val


def _check_band(sigma2_lo: float, sigma2_hi: float) -> None:
    if not 0.0 <= sigma2_lo <= sigma2_hi:
        raise ConfigError(
            f"variance band must satisfy 0 <= lo <= hi, got ({sigma2_lo}, {sigma2_hi})"
        )


@dataclass(frozen=True)
class GexpProblem:
    """One expectation E[phi(B_horizon + shift)] under a variance band."""

    payoff: Callable[[np.ndarray], np.ndarray]
    sigma2_lo: float
    sigma2_hi: float
    horizon: float = 1.0
    shift: float = 0.0

    def __post_init__(self) -> None:
        _check_band(self.sigma2_lo, self.sigma2_hi)
        if not self.horizon > 0.0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if not callable(self.payoff):
            raise ConfigError("payoff must be callable")

    @property
    def sigma_hi(self) -> float:
        return math.sqrt(self.sigma2_hi)


@dataclass(frozen=True)
class PdeGrid:
    """Uniform space/time grid for the explicit march."""

    x_min: float
    x_max: float
    nx: int
    nt: int

    def __post_init__(self) -> None:
        if not self.x_min < self.x_max:
            raise ConfigError(f"grid needs x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.nx < 3:
            raise ConfigError(f"grid needs nx >= 3 points, got {self.nx}")
        if self.nt < 1:
            raise ConfigError(f"grid needs nt >= 1 steps, got {self.nt}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)


def default_grid(problem: GexpProblem, nx: int = DEFAULT_NX) -> PdeGrid:
    """Grid spanning shift +- 8 sigma_hi sqrt(horizon), dt at half the bound."""
    if problem.sigma2_hi == 0.0:
        raise ConfigError("degenerate zero-variance band needs no grid")
    half = DEFAULT_HALF_WIDTH_SIGMAS * problem.sigma_hi * math.sqrt(problem.horizon)
    dx = 2.0 * half / (nx - 1)
    dt_max = STABILITY_MARGIN * dx * dx / problem.sigma2_hi
    nt = max(1, math.ceil(problem.horizon / dt_max))
    return PdeGrid(x_min=problem.shift - half, x_max=problem.shift + half, nx=nx, nt=nt)


def _payoff_on(problem: GexpProblem, xs: np.ndarray) -> np.ndarray:
    u = np.asarray(problem.payoff(xs), dtype=float)
    if u.shape != xs.shape:
        raise ConfigError(f"payoff returned shape {u.shape} for grid shape {xs.shape}")
    if not np.all(np.isfinite(u)):
        i = int(np.flatnonzero(~np.isfinite(u))[0])
        raise DataError(f"payoff is non-finite at grid point x={xs[i]:.6g}")
    return u


def gexp_pde(
    problem: GexpProblem,
    grid: PdeGrid | None = None,
    *,
    return_profile: bool = False,
):
    """March the generator-heat equation; returns u(horizon, shift).

    The two boundary nodes clamp the second derivative to zero (linear
    extrapolation), so they stay at their payoff values; the default grid is
    wide enough (8 sigma) that the clamp never reaches the evaluation point.
    """
    if problem.sigma2_hi == 0.0:
        val = float(_payoff_on(problem, np.array([problem.shift]))[0])
        return (val, np.array([problem.shift]), np.array([val])) if return_profile else val
    if grid is None:
        grid = default_grid(problem)
    dx = grid.dx
    dt = problem.horizon / grid.nt
    if dt > dx * dx / problem.sigma2_hi * (1.0 + 1e-12):
        raise StabilityError(
            f"explicit step dt={dt:.3e} exceeds stability bound "
            f"dx^2/sigma2_hi={dx * dx / problem.sigma2_hi:.3e}; increase nt or coarsen x"
        )
    if not grid.x_min <= problem.shift <= grid.x_max:
        raise ConfigError(f"shift {problem.shift} lies outside the grid [{grid.x_min}, {grid.x_max}]")

    xs = grid.xs()
    u = _payoff_on(problem, xs)
    lo, hi = problem.sigma2_lo, problem.sigma2_hi
    inv_dx2 = 1.0 / (dx * dx)
    for _ in range(grid.nt):
        d2 = (u[:-2] - 2.0 * u[1:-1] + u[2:]) * inv_dx2
        u[1:-1] += dt * 0.5 * (hi * np.maximum(d2, 0.0) - lo * np.maximum(-d2, 0.0))
    value = float(np.interp(problem.shift, xs, u))
    return (value, xs, u) if return_profile else value


def gexp_dp(
    problem: GexpProblem,
    steps: int = 100,
    quad_nodes: int = 21,
    grid: PdeGrid | None = None,
) -> float:
    """Backward dynamic program over `steps` stages; returns V_0(shift).

    V_K = phi; V_k(x) = max over sigma2 in {lo, hi} of
    E[V_{k+1}(x + sigma * xi * sqrt(horizon/steps))], xi ~ N(0,1), evaluated
    by Gauss-Hermite quadrature with values linearly interpolated on the
    grid (clamped at the ends; the default grid is wide enough that the
    clamp carries negligible mass).
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if quad_nodes < 2:
        raise ConfigError(f"quad_nodes must be >= 2, got {quad_nodes}")
    if problem.sigma2_hi == 0.0:
        return float(_payoff_on(problem, np.array([problem.shift]))[0])
    if grid is None:
        grid = default_grid(problem)
    xs = grid.xs()
    values = _payoff_on(problem, xs)

    nodes, weights = np.polynomial.hermite.hermgauss(quad_nodes)
    z = nodes * math.sqrt(2.0)
    wts = weights / math.sqrt(math.pi)
    dt_scale = math.sqrt(problem.horizon / steps)
    sigmas = sorted({math.sqrt(problem.sigma2_lo), math.sqrt(problem.sigma2_hi)})

    for _ in range(steps):
        best = None
        for sigma in sigmas:
            pts = xs[None, :] + (sigma * dt_scale) * z[:, None]
            avg = wts @ np.interp(pts, xs, values)
            best = avg if best is None else np.maximum(best, avg)
        values = best
    return float(np.interp(problem.shift, xs, values))


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    n_draws: int
    sigma2: float


def gexp_mc_lower_bound(
    problem: GexpProblem,
    sigma2: float,
    n_draws: int,
    rng: SeededRng,
) -> McEstimate:
    """E[phi] under one constant variance in the band; lower-bounds the target."""
    if not problem.sigma2_lo <= sigma2 <= problem.sigma2_hi:
        raise ConfigError(
            f"sigma2={sigma2} lies outside the band [{problem.sigma2_lo}, {problem.sigma2_hi}]"
        )
    if n_draws < 2:
        raise ConfigError(f"need at least 2 draws, got {n_draws}")
    g = rng.generator()
    draws = problem.shift + math.sqrt(sigma2 * problem.horizon) * g.standard_normal(n_draws)
    vals = np.asarray(problem.payoff(draws), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DataError("payoff is non-finite on Monte Carlo draws")
    return McEstimate(
        value=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / math.sqrt(n_draws)),
        n_draws=int(n_draws),
        sigma2=float(sigma2),
    )
