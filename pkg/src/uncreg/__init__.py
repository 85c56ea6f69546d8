"""Linear regression under mean and variance uncertainty.

A library plus service plus CLI for the moving-block robust least squares
estimator, a sublinear-expectation engine for distribution uncertainty,
seeded data generators, and a benchmark harness.
"""

from .core import (
    ConfigError,
    DataError,
    Dataset,
    RankDeficiencyError,
    Sample,
    SeededRng,
    StabilityError,
    UncertaintyEnvelope,
    UncregError,
    ar1_dataset,
    load_csv,
    log_returns,
    make_report,
    save_csv,
    write_report,
)
from .ols import OlsFit, f_statistic, ols_fit
from .robust import BlockDiagnostics, RobustLseFit, predict, robust_lse_fit
from .gexp import (
    GexpProblem,
    McEstimate,
    PdeGrid,
    builtin_payoff,
    g_function,
    gexp_dp,
    gexp_mc_lower_bound,
    gexp_pde,
)
from .dgp import (
    DEFAULT_CLEAN_FRACTIONS,
    DEFAULT_VOLATILITY_LADDER,
    DgpConfig,
    GroundTruth,
    HeteroConfig,
    ScenarioConfig,
    generate_grouped,
    generate_hetero,
    generate_scenario,
    ramp_x,
)
from .bench import ExperimentSpec, TableReport, run_experiment, run_sp500

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
