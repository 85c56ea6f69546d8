"""Request handlers shared by the FastAPI app and the CLI.

Each handler is a pure function from a request model to a response model;
all validation beyond basic shape checks lives in the library itself, so
errors surface as the library's exception types and each front end maps
them to its own convention (HTTP status vs exit code).
"""

from __future__ import annotations

import numpy as np

from ..bench import ExperimentSpec, run_experiment, run_sp500
from ..core import Dataset, SeededRng, jsonable, make_report
from ..dgp import (
    DEFAULT_VOLATILITY_LADDER,
    DgpConfig,
    GroundTruth,
    HeteroConfig,
    ScenarioConfig,
    generate_grouped,
    generate_hetero,
    generate_scenario,
)
from ..gexp import GexpProblem, builtin_payoff, default_grid, gexp_dp, gexp_pde
from ..ols import f_statistic, ols_fit
from ..robust import robust_lse_fit
from .schemas import (
    BenchRequest,
    BenchResponse,
    DataPayload,
    EnvelopeOut,
    FitOlsRequest,
    FitOlsResponse,
    FitRobustRequest,
    FitRobustResponse,
    GenerateRequest,
    GenerateResponse,
    GexpRequest,
    GexpResponse,
    Sp500Request,
    Sp500Response,
)


def _dataset(payload: DataPayload) -> Dataset:
    return Dataset(
        np.asarray(payload.x, dtype=float), np.asarray(payload.y, dtype=float)
    )


def handle_fit_ols(req: FitOlsRequest) -> FitOlsResponse:
    data = _dataset(req.data)
    fit = ols_fit(data)
    f = f_statistic(fit, *req.f_df) if req.f_df else fit.f_stat
    estimates = {
        "beta": fit.beta,
        "mu": fit.mu,
        "mse": fit.mse,
        "r2": fit.r2,
        "f_stat": f,
        "n": fit.n,
    }
    report = make_report(
        "ols-fit",
        {"t": data.t, "q": data.q, "f_df": req.f_df or (data.q, data.t - data.q - 1)},
        input={"digest": data.digest()},
        estimates=estimates,
    )
    return FitOlsResponse(
        beta=[float(b) for b in fit.beta],
        mu=fit.mu,
        mse=fit.mse,
        r2=fit.r2,
        f_stat=jsonable(f),
        n=fit.n,
        report=report,
    )


def handle_fit_robust(req: FitRobustRequest) -> FitRobustResponse:
    data = _dataset(req.data)
    fit = robust_lse_fit(data, n=req.n, n1=req.n1, diagnostics=req.diagnostics)
    env = fit.envelope
    estimates = {
        "beta_hat": fit.beta_hat,
        "mu_lo": env.mu_lo,
        "mu_hi": env.mu_hi,
        "sigma2_lo": env.sigma2_lo,
        "sigma2_hi": env.sigma2_hi,
        "sigma_lo": env.sigma_lo,
        "sigma_hi": env.sigma_hi,
        "k_hat": fit.k_hat,
        "m": fit.m,
        "skipped_blocks": fit.skipped_blocks,
    }
    sections = {
        "input": {"digest": data.digest()},
        "estimates": estimates,
    }
    if req.diagnostics:
        # two-column traces (index, value) keyed by block start
        sections["diagnostics"] = {
            "block_mean_trace": [[l + 1, float(v)] for l, v in enumerate(fit.block_means)],
            "block_sigma2_trace": [[d.l, d.sigma2_l] for d in fit.diagnostics],
        }
    report = make_report(
        "robust-fit",
        {"t": data.t, "q": data.q, "n": fit.n, "n1": fit.n1},
        **sections,
    )
    return FitRobustResponse(
        beta_hat=[float(b) for b in fit.beta_hat],
        envelope=EnvelopeOut(
            mu_lo=env.mu_lo,
            mu_hi=env.mu_hi,
            sigma2_lo=env.sigma2_lo,
            sigma2_hi=env.sigma2_hi,
            sigma_lo=env.sigma_lo,
            sigma_hi=env.sigma_hi,
        ),
        k_hat=fit.k_hat,
        n=fit.n,
        n1=fit.n1,
        m=fit.m,
        skipped_blocks=list(fit.skipped_blocks),
        report=report,
    )


def _truth_dict(truth: GroundTruth) -> dict:
    return {
        "beta": truth.beta,
        "etas": truth.etas,
        "sigmas": truth.sigmas,
        "eta_min": truth.eta_min,
        "eta_max": truth.eta_max,
        "sigma_min": truth.sigma_min,
        "sigma_max": truth.sigma_max,
    }


def handle_generate(req: GenerateRequest) -> GenerateResponse:
    rng = SeededRng(req.seed, req.stream)
    extra = {} if req.x_rule is None else {"x_rule": req.x_rule}
    if req.design == "grouped":
        config = DgpConfig(
            t=req.t,
            n0=req.n0,
            beta=req.beta,
            eta_range=req.eta_range,
            sigma_range=req.sigma_range,
            **extra,
        )
        data, truth = generate_grouped(config, rng)
        echo = {
            "design": "grouped",
            "t": req.t,
            "n0": req.n0,
            "beta": req.beta,
            "eta_range": req.eta_range,
            "sigma_range": req.sigma_range,
        }
    elif req.design == "scenario":
        kw = dict(
            beta=req.beta,
            clean_sigma=req.clean_sigma,
            contaminated_sigma=req.contaminated_sigma,
            **extra,
        )
        if req.clean_fraction is not None:
            config = ScenarioConfig(t=req.t, clean_fraction=req.clean_fraction, **kw)
        else:
            config = ScenarioConfig.for_scenario(req.scenario, req.t, **kw)
        data, truth = generate_scenario(config, rng)
        echo = {
            "design": "scenario",
            "t": req.t,
            "clean_fraction": config.clean_fraction,
            "clean_count": config.clean_count,
            "beta": req.beta,
            "clean_sigma": req.clean_sigma,
            "contaminated_sigma": req.contaminated_sigma,
        }
    else:
        sigmas = tuple(req.sigmas) if req.sigmas else DEFAULT_VOLATILITY_LADDER
        config = HeteroConfig(t=req.t, sigmas=sigmas, beta=req.beta, **extra)
        data, truth = generate_hetero(config, rng)
        echo = {"design": "hetero", "t": req.t, "sigmas": sigmas, "beta": req.beta}
    echo.update({"x_rule": str(config.x_rule), "seed": req.seed, "stream": req.stream})
    report = make_report(
        "generate",
        echo,
        data={"t": data.t, "q": data.q, "digest": data.digest()},
        truth=_truth_dict(truth),
    )
    return GenerateResponse(
        x=jsonable(data.x),
        y=jsonable(data.y),
        truth=jsonable(_truth_dict(truth)),
        report=report,
    )


def _closed_form(req: GexpRequest) -> float | None:
    """Band expectation where a closed form exists (shift folded in)."""
    h, s = req.horizon, req.shift
    hi, lo = req.sigma2_hi, req.sigma2_lo
    if req.payoff == "linear":
        return s
    if req.payoff == "quadratic":  # convex: top of the band
        return hi * h + s * s
    if req.payoff == "neg_quadratic":  # concave: bottom of the band
        return -(lo * h + s * s)
    if req.payoff == "quartic":  # convex
        return 3.0 * hi * hi * h * h + 6.0 * hi * h * s * s + s ** 4
    return None


def handle_gexp(req: GexpRequest) -> GexpResponse:
    problem = GexpProblem(
        builtin_payoff(req.payoff, strike=req.strike),
        req.sigma2_lo,
        req.sigma2_hi,
        horizon=req.horizon,
        shift=req.shift,
    )
    grid = None if problem.sigma2_hi == 0.0 else default_grid(problem, nx=req.nx)
    pde = dp = trace = None
    if req.method in ("pde", "both"):
        if req.trace:
            pde, xs, u = gexp_pde(problem, grid, return_profile=True)
            trace = [[float(a), float(b)] for a, b in zip(xs, u)]
        else:
            pde = gexp_pde(problem, grid)
    if req.method in ("dp", "both"):
        dp = gexp_dp(problem, steps=req.steps, quad_nodes=req.quad_nodes, grid=grid)
    value = pde if pde is not None else dp
    closed = _closed_form(req)
    grid_info = (
        {"degenerate": True, "nx": 1, "nt": 0}
        if grid is None
        else {"nx": grid.nx, "nt": grid.nt, "x_min": grid.x_min,
              "x_max": grid.x_max, "dx": grid.dx}
    )
    config = {
        "payoff": req.payoff,
        "strike": req.strike,
        "sigma2_lo": req.sigma2_lo,
        "sigma2_hi": req.sigma2_hi,
        "horizon": req.horizon,
        "shift": req.shift,
        "method": req.method,
        "nx": req.nx,
        "steps": req.steps,
        "quad_nodes": req.quad_nodes,
    }
    values = {"value": value, "pde": pde, "dp": dp, "closed_form": closed}
    sections = {"values": values, "grid": grid_info}
    if trace is not None:
        sections["trace"] = trace
    report = make_report("gexp", config, **sections)
    return GexpResponse(
        value=value,
        pde=pde,
        dp=dp,
        closed_form=closed,
        grid=jsonable(grid_info),
        trace=trace,
        report=report,
    )


def handle_bench(req: BenchRequest) -> BenchResponse:
    spec = ExperimentSpec(
        design=req.design,
        replications=req.replications,
        seed=req.seed,
        stream_base=req.stream_base,
        threads=req.threads,
        t_values=tuple(req.t_values) if req.t_values else None,
        n=req.n,
        n_values=tuple(req.n_values) if req.n_values else None,
        n0=req.n0,
        n1=req.n1,
        beta=req.beta,
        eta_range=req.eta_range,
        sigma_range=req.sigma_range,
        scenarios=tuple(req.scenarios) if req.scenarios else None,
        scenario_t=req.scenario_t,
        block_rule=req.block_rule,
        clean_sigma=req.clean_sigma,
        contaminated_sigma=req.contaminated_sigma,
    )
    table = run_experiment(spec)
    report = table.to_dict()
    return BenchResponse(
        design=table.design,
        cells=report["cells"],
        traces=report["traces"],
        notes=report["notes"],
        report=report,
    )


def handle_sp500(req: Sp500Request) -> Sp500Response:
    table = run_sp500(
        dates=req.dates,
        closes=req.closes,
        windows=[tuple(w) for w in req.windows] if req.windows else None,
        use_levels=req.use_levels,
        n=req.n,
        n1=req.n1,
        f_crit=req.f_crit,
        f_df=req.f_df,
        mu_rule=req.mu_rule,
    )
    report = table.to_dict()
    return Sp500Response(
        windows=report["cells"],
        summary=report["config"].get("summary", {}),
        report=report,
    )
