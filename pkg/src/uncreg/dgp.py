"""Seeded data generators for the benchmark designs.

Three families, all with y_i = x_i @ beta + eta(i) + eps_i over an index
ramp covariate:

* grouped: K = T / n0 consecutive groups, each with its own intercept
  eta_j ~ U[eta_range] and noise scale sigma_j ~ U[sigma_range];
* scenario: a single regression line whose noise variance jumps from 1 to
  100 for the trailing (1 - a) fraction of the index range (the tail
  placement matters: the block estimator is order-sensitive);
* hetero: fixed intercept 0 and a fixed ladder of per-group noise scales,
  useful because the target variance band is then known exactly.

Every generator consumes exactly one SeededRng stream and draws in a
documented order (group parameters first, then noise), so replications are
reproducible one by one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ConfigError, Dataset, SeededRng

# Clean fractions a_m for scenarios m = 1..6.
DEFAULT_CLEAN_FRACTIONS: tuple[float, ...] = (0.95, 0.90, 0.85, 0.80, 0.70, 0.50)

# Fixed ladder of per-group noise scales for the hetero design; its min/max
# (0.1304, 0.7165) are the exact target variance band.
DEFAULT_VOLATILITY_LADDER: tuple[float, ...] = (
    0.6995, 0.5851, 0.3481, 0.1304, 0.7165,
    0.3344, 0.4721, 0.5211, 0.1955, 0.4851,
)


def ramp_x(slope: float, offset: float = 1.0) -> Callable[[int], np.ndarray]:
    """Covariate recipe x_i = offset + slope * i for i = 1..T (column vector)."""

    def build(t: int) -> np.ndarray:
        return (offset + slope * np.arange(1, t + 1, dtype=float))[:, None]

    return build


def _resolve_x_rule(x_rule) -> Callable[[int], np.ndarray]:
    if callable(x_rule):
        return x_rule
    if isinstance(x_rule, str):
        parts = x_rule.split(":")
        if parts[0] == "ramp" and len(parts) in (2, 3):
            slope = float(parts[1])
            offset = float(parts[2]) if len(parts) == 3 else 1.0
            return ramp_x(slope, offset)
        raise ConfigError(f"unknown x_rule {x_rule!r}; expected 'ramp:<slope>[:<offset>]'")
    raise ConfigError(f"x_rule must be a callable or 'ramp:<slope>' string, got {x_rule!r}")


@dataclass(frozen=True)
class GroundTruth:
    """Realized parameters behind one generated sample."""

    beta: np.ndarray
    etas: np.ndarray
    sigmas: np.ndarray

    @property
    def eta_min(self) -> float:
        return float(self.etas.min())

    @property
    def eta_max(self) -> float:
        return float(self.etas.max())

    @property
    def sigma_min(self) -> float:
        return float(self.sigmas.min())

    @property
    def sigma_max(self) -> float:
        return float(self.sigmas.max())


# ---------------------------------------------------------------------------
# grouped design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DgpConfig:
    """Grouped design: K = t // n0 groups of n0 consecutive rows."""

    t: int
    n0: int
    beta: float | Sequence[float] = 1.0
    eta_range: tuple[float, float] = (0.0, 5.0)
    sigma_range: tuple[float, float] = (0.1, 1.0)
    x_rule: object = "ramp:0.01"

    def __post_init__(self) -> None:
        if self.t < 2 or self.n0 < 1:
            raise ConfigError(f"need t >= 2 and n0 >= 1, got t={self.t}, n0={self.n0}")
        if self.t % self.n0 != 0:
            raise ConfigError(f"t={self.t} must be an exact multiple of n0={self.n0}")
        lo, hi = self.eta_range
        if not lo <= hi:
            raise ConfigError(f"eta_range must be ordered, got {self.eta_range}")
        slo, shi = self.sigma_range
        if not 0.0 < slo <= shi:
            raise ConfigError(f"sigma_range must satisfy 0 < lo <= hi, got {self.sigma_range}")

    @property
    def k(self) -> int:
        return self.t // self.n0

    def beta_vector(self, q: int) -> np.ndarray:
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if b.shape != (q,):
            raise ConfigError(f"beta has shape {b.shape}, covariates have q={q}")
        return b


def generate_grouped(config: DgpConfig, rng: SeededRng) -> tuple[Dataset, GroundTruth]:
    """Draw one grouped sample; draw order: etas, sigmas, then noise."""
    g = rng.generator()
    k = config.k
    etas = g.uniform(config.eta_range[0], config.eta_range[1], size=k)
    sigmas = g.uniform(config.sigma_range[0], config.sigma_range[1], size=k)
    x = _resolve_x_rule(config.x_rule)(config.t)
    beta = config.beta_vector(x.shape[1])
    group = np.arange(config.t) // config.n0
    eps = g.standard_normal(config.t) * sigmas[group]
    y = x @ beta + etas[group] + eps
    return Dataset(x, y), GroundTruth(beta=beta, etas=etas, sigmas=sigmas)


# ---------------------------------------------------------------------------
# contaminated-tail scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """Variance-jump design: clean N(0,1) noise, then N(0,100) in the tail."""

    t: int
    clean_fraction: float
    beta: float = 1.0
    clean_sigma: float = 1.0
    contaminated_sigma: float = 10.0
    x_rule: object = "ramp:0.01"

    def __post_init__(self) -> None:
        if self.t < 2:
            raise ConfigError(f"need t >= 2, got {self.t}")
        if not 0.0 < self.clean_fraction <= 1.0:
            raise ConfigError(f"clean_fraction must be in (0, 1], got {self.clean_fraction}")
        if int(self.clean_fraction * self.t) < 1:
            raise ConfigError("clean_fraction * t must leave at least one clean row")

    @property
    def clean_count(self) -> int:
        return int(self.clean_fraction * self.t)

    @classmethod
    def for_scenario(cls, m: int, t: int, **kw) -> "ScenarioConfig":
        if not 1 <= m <= len(DEFAULT_CLEAN_FRACTIONS):
            raise ConfigError(f"scenario index must be 1..{len(DEFAULT_CLEAN_FRACTIONS)}, got {m}")
        return cls(t=t, clean_fraction=DEFAULT_CLEAN_FRACTIONS[m - 1], **kw)


def generate_scenario(config: ScenarioConfig, rng: SeededRng) -> tuple[Dataset, GroundTruth]:
    """Draw one contaminated sample; the dirty rows sit at the end."""
    g = rng.generator()
    t, c = config.t, config.clean_count
    x = _resolve_x_rule(config.x_rule)(t)
    beta = np.atleast_1d(np.asarray(config.beta, dtype=float))
    scale = np.full(t, config.clean_sigma)
    scale[c:] = config.contaminated_sigma
    eps = g.standard_normal(t) * scale
    y = x @ beta + eps
    truth = GroundTruth(
        beta=beta,
        etas=np.zeros(1),
        sigmas=np.array([config.clean_sigma, config.contaminated_sigma] if c < t else [config.clean_sigma]),
    )
    return Dataset(x, y), truth


# ---------------------------------------------------------------------------
# fixed-ladder heteroscedastic design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeteroConfig:
    """K groups with zero intercept and a fixed ladder of noise scales."""

    t: int
    sigmas: tuple[float, ...] = DEFAULT_VOLATILITY_LADDER
    beta: float = 1.0
    x_rule: object = "ramp:0.005"

    def __post_init__(self) -> None:
        if len(self.sigmas) < 1 or any(s <= 0 for s in self.sigmas):
            raise ConfigError("sigmas must be a non-empty tuple of positive scales")
        if self.t % len(self.sigmas) != 0:
            raise ConfigError(f"t={self.t} must be an exact multiple of K={len(self.sigmas)}")
        if self.t // len(self.sigmas) < 1:
            raise ConfigError("each group needs at least one row")

    @property
    def k(self) -> int:
        return len(self.sigmas)

    @property
    def n0(self) -> int:
        return self.t // len(self.sigmas)


def generate_hetero(config: HeteroConfig, rng: SeededRng) -> tuple[Dataset, GroundTruth]:
    """Draw one heteroscedastic sample with known variance band."""
    g = rng.generator()
    x = _resolve_x_rule(config.x_rule)(config.t)
    beta = np.atleast_1d(np.asarray(config.beta, dtype=float))
    sigmas = np.asarray(config.sigmas, dtype=float)
    group = np.arange(config.t) // config.n0
    eps = g.standard_normal(config.t) * sigmas[group]
    y = x @ beta + eps
    return Dataset(x, y), GroundTruth(beta=beta, etas=np.zeros(config.k), sigmas=sigmas)
