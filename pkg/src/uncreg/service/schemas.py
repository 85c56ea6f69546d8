"""Request/response models for the HTTP service and the CLI.

Both front ends speak these models: the CLI builds requests from flags and
files, the FastAPI app builds them from JSON bodies, and both hand them to
the same handler functions. Every response carries the full structured
report (config echo, input digest where one exists, estimates) so a saved
response is enough to rerun the computation.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ..bench import DEFAULT_F_CRIT, DEFAULT_SEED
from ..gexp import DEFAULT_NX

PayoffName = Literal[
    "linear", "quadratic", "neg_quadratic", "quartic", "capped_quadratic", "call"
]
DesignName = Literal["table1", "table2", "scenarios", "scenarios_large_t", "hetero"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataPayload(_Model):
    """Inline dataset: row-major covariates plus the response vector."""

    x: list[list[float]] = Field(min_length=2)
    y: list[float] = Field(min_length=2)


class FitOlsRequest(_Model):
    data: DataPayload
    f_df: tuple[int, int] | None = None


class FitRobustRequest(_Model):
    data: DataPayload
    n: int | None = None
    n1: int | None = None
    diagnostics: bool = False


class FitOlsResponse(_Model):
    beta: list[float]
    mu: float
    mse: float
    r2: float
    f_stat: float | str  # "inf" when the fit is exact
    n: int
    report: dict


class EnvelopeOut(_Model):
    mu_lo: float
    mu_hi: float
    sigma2_lo: float
    sigma2_hi: float
    sigma_lo: float
    sigma_hi: float


class FitRobustResponse(_Model):
    beta_hat: list[float]
    envelope: EnvelopeOut
    k_hat: int
    n: int
    n1: int
    m: int
    skipped_blocks: list[int]
    report: dict


class GenerateRequest(_Model):
    design: Literal["grouped", "scenario", "hetero"] = "grouped"
    t: int
    seed: int = DEFAULT_SEED
    stream: int = 0
    beta: float = 1.0
    n0: int = 200
    eta_range: tuple[float, float] = (0.0, 5.0)
    sigma_range: tuple[float, float] = (0.1, 1.0)
    scenario: int = 1
    clean_fraction: float | None = None
    clean_sigma: float = 1.0
    contaminated_sigma: float = 10.0
    sigmas: list[float] | None = None
    x_rule: str | None = None


class GenerateResponse(_Model):
    x: list[list[float]]
    y: list[float]
    truth: dict | None
    report: dict


class GexpRequest(_Model):
    payoff: PayoffName
    strike: float = 1.0
    sigma2_lo: float
    sigma2_hi: float
    horizon: float = 1.0
    shift: float = 0.0
    method: Literal["pde", "dp", "both"] = "pde"
    nx: int = DEFAULT_NX
    steps: int = 100
    quad_nodes: int = 21
    trace: bool = False


class GexpResponse(_Model):
    value: float
    pde: float | None
    dp: float | None
    closed_form: float | None
    grid: dict
    trace: list[list[float]] | None
    report: dict


class BenchRequest(_Model):
    design: DesignName
    replications: int = 500
    seed: int = DEFAULT_SEED
    stream_base: int = 0
    threads: int = 1
    t_values: list[int] | None = None
    n: int | None = None
    n_values: list[int] | None = None
    n0: int = 200
    n1: int = 20
    beta: float = 1.0
    eta_range: tuple[float, float] = (0.0, 5.0)
    sigma_range: tuple[float, float] = (0.1, 1.0)
    scenarios: list[int] | None = None
    scenario_t: int = 200
    block_rule: Literal["calibrated-fraction", "clean-count"] = "calibrated-fraction"
    clean_sigma: float = 1.0
    contaminated_sigma: float = 10.0


class BenchResponse(_Model):
    design: str
    cells: list[dict]
    traces: dict
    notes: list[str]
    report: dict


class Sp500Request(_Model):
    dates: list[str] = Field(min_length=2)
    closes: list[float] = Field(min_length=2)
    windows: list[tuple[str, str]] | None = None
    use_levels: bool = False
    n: int | None = None
    n1: int = 20
    f_crit: float = DEFAULT_F_CRIT
    f_df: tuple[int, int] | None = None
    mu_rule: Literal["block", "midpoint", "lower", "upper"] = "block"


class Sp500Response(_Model):
    windows: list[dict]
    summary: dict
    report: dict
