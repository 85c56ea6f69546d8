"""Command-line front end: thin client over the service handlers.

Each subcommand parses flags into the shared request models, calls the
matching handler in-process, and emits the handler's structured report
(JSON by default, aligned text for the table-shaped reports). Reports go
to stdout unless --out is given; --out writes atomically, so a failed run
never leaves a partial file.

Exit codes: 0 success; 1 runtime failure (unreadable file, degenerate
data); 2 usage error (bad flags, out-of-range parameters). Failures print
a single line "error: <kind>: <message>" to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from pydantic import ValidationError

from . import __version__
from .bench import DEFAULT_F_CRIT, DEFAULT_SEED, DESIGNS, load_price_series, report_text
from .core import (
    ConfigError,
    Dataset,
    UncregError,
    _atomic_write_text,
    jsonable,
    load_csv,
    save_csv,
    write_report,
)
from .gexp import DEFAULT_NX, PAYOFF_NAMES
from .service import handlers, schemas


# ---------------------------------------------------------------------------
# small shared helpers
# ---------------------------------------------------------------------------

def _emit(report: dict, args, text: str | None = None) -> None:
    """Write the report to --out (atomic) or stdout, honoring --format."""
    fmt = getattr(args, "format", "json")
    if fmt == "text" and text is not None:
        payload = text
    else:
        payload = json.dumps(jsonable(report), indent=2) + "\n"
    out = getattr(args, "out", None)
    if out:
        if fmt == "text" and text is not None:
            _atomic_write_text(out, payload)
        else:
            write_report(report, out)
    else:
        sys.stdout.write(payload)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}")


def _windows(text: str) -> list[tuple[str, str]]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise argparse.ArgumentTypeError(
                f"window {part!r} must be start:end, e.g. 2015-07:2016-07"
            )
        a, b = part.split(":", 1)
        out.append((a.strip(), b.strip()))
    if not out:
        raise argparse.ArgumentTypeError("no windows given")
    return out


def _df_pair(text: str) -> tuple[int, int]:
    parts = _ints(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected num,den degrees of freedom, got {text!r}")
    return parts


def _payload(data: Dataset) -> schemas.DataPayload:
    return schemas.DataPayload(x=data.x.tolist(), y=data.y.tolist())


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------

def _cmd_generate(args) -> int:
    fields = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                fields = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {args.config}: {exc}") from exc
        if not isinstance(fields, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
    overrides = {
        "design": args.design,
        "t": args.t,
        "seed": args.seed,
        "stream": args.stream,
        "beta": args.beta,
        "n0": args.n0,
        "scenario": args.scenario,
        "clean_fraction": args.clean_fraction,
        "clean_sigma": args.clean_sigma,
        "contaminated_sigma": args.contaminated_sigma,
        "sigmas": list(args.sigmas) if args.sigmas is not None else None,
        "x_rule": args.x_rule,
    }
    if args.eta_lo is not None or args.eta_hi is not None:
        lo = args.eta_lo if args.eta_lo is not None else 0.0
        hi = args.eta_hi if args.eta_hi is not None else 5.0
        overrides["eta_range"] = (lo, hi)
    if args.sigma_lo is not None or args.sigma_hi is not None:
        lo = args.sigma_lo if args.sigma_lo is not None else 0.1
        hi = args.sigma_hi if args.sigma_hi is not None else 1.0
        overrides["sigma_range"] = (lo, hi)
    fields.update({k: v for k, v in overrides.items() if v is not None})
    if "t" not in fields:
        raise ConfigError("generate needs --t (or a config file providing t)")
    resp = handlers.handle_generate(schemas.GenerateRequest(**fields))
    if args.csv:
        save_csv(Dataset(np.asarray(resp.x, float), np.asarray(resp.y, float)), args.csv)
    _emit(resp.report, args)
    return 0


def _cmd_fit(args) -> int:
    data = load_csv(args.csv, args.y, args.x)
    payload = _payload(data)
    if args.estimator in ("robust", "both"):
        rres = handlers.handle_fit_robust(
            schemas.FitRobustRequest(
                data=payload, n=args.n, n1=args.n1, diagnostics=args.diagnostics
            )
        )
    if args.estimator in ("ols", "both"):
        ores = handlers.handle_fit_ols(
            schemas.FitOlsRequest(data=payload, f_df=args.f_df)
        )
    if args.estimator == "robust":
        report = rres.report
    elif args.estimator == "ols":
        report = ores.report
    else:
        report = {
            "kind": "fit-report",
            "config": {"csv": str(args.csv), "y": args.y, "x": list(args.x)},
            "robust": rres.report,
            "ols": ores.report,
        }
    _emit(report, args)
    return 0


def _cmd_gexp(args) -> int:
    resp = handlers.handle_gexp(
        schemas.GexpRequest(
            payoff=args.payoff,
            strike=args.strike,
            sigma2_lo=args.sigma_lo * args.sigma_lo,
            sigma2_hi=args.sigma_hi * args.sigma_hi,
            horizon=args.horizon,
            shift=args.shift,
            method=args.method,
            nx=args.nx,
            steps=args.steps,
            quad_nodes=args.quad_nodes,
            trace=args.trace,
        )
    )
    _emit(resp.report, args)
    return 0


def _cmd_bench(args) -> int:
    resp = handlers.handle_bench(
        schemas.BenchRequest(
            design=args.design,
            replications=args.reps,
            seed=args.seed,
            stream_base=args.stream_base,
            threads=args.threads,
            t_values=list(args.t_values) if args.t_values else None,
            n=args.n,
            n_values=list(args.n_values) if args.n_values else None,
            n0=args.n0,
            n1=args.n1,
            beta=args.beta,
            scenarios=list(args.scenarios) if args.scenarios else None,
            scenario_t=args.scenario_t,
            block_rule=args.block_rule,
            clean_sigma=args.clean_sigma,
            contaminated_sigma=args.contaminated_sigma,
        )
    )
    _emit(resp.report, args, text=report_text(resp.report))
    return 0


def _cmd_sp500(args) -> int:
    dates, closes = load_price_series(args.csv, args.date_col, args.close_col)
    resp = handlers.handle_sp500(
        schemas.Sp500Request(
            dates=list(dates),
            closes=list(closes),
            windows=args.windows,
            use_levels=(args.prep == "levels"),
            n=args.n,
            n1=args.n1,
            f_crit=args.fcrit,
            f_df=args.f_df,
            mu_rule=args.mu_rule,
        )
    )
    _emit(resp.report, args, text=report_text(resp.report))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uncreg",
        description=(
            "Linear regression under mean and variance uncertainty: "
            "moving-block robust fits, variance-band expectations, seeded "
            "generators, and a benchmark harness."
        ),
    )
    parser.add_argument("--version", action="version", version=f"uncreg {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add_out(p, formats=False):
        p.add_argument("--out", metavar="PATH",
                       help="write the report to PATH atomically (default: stdout)")
        if formats:
            p.add_argument("--format", choices=("json", "text"), default="json",
                           help="report rendering (default: json)")
        p.add_argument("-v", "--verbose", action="store_true",
                       help="log progress to stderr (default: off)")

    # generate ---------------------------------------------------------------
    g = sub.add_parser(
        "generate", help="draw a seeded synthetic dataset",
        description="Draw one dataset from a named design and report the "
                    "generating ground truth.",
    )
    g.add_argument("--design", choices=("grouped", "scenario", "hetero"),
                   help="data design (default: grouped)")
    g.add_argument("--t", type=int, help="sample count (required here or in --config)")
    g.add_argument("--seed", type=int, help=f"base seed (default: {DEFAULT_SEED})")
    g.add_argument("--stream", type=int, help="stream id within the seed (default: 0)")
    g.add_argument("--beta", type=float, help="slope coefficient (default: 1.0)")
    g.add_argument("--n0", type=int, help="group length for grouped design (default: 200)")
    g.add_argument("--eta-lo", type=float, dest="eta_lo",
                   help="lower mean-shift bound, grouped design (default: 0.0)")
    g.add_argument("--eta-hi", type=float, dest="eta_hi",
                   help="upper mean-shift bound, grouped design (default: 5.0)")
    g.add_argument("--sigma-lo", type=float, dest="sigma_lo",
                   help="lower noise-scale bound, grouped design (default: 0.1)")
    g.add_argument("--sigma-hi", type=float, dest="sigma_hi",
                   help="upper noise-scale bound, grouped design (default: 1.0)")
    g.add_argument("--scenario", type=int,
                   help="contamination scenario index 1..6 (default: 1)")
    g.add_argument("--clean-fraction", type=float, dest="clean_fraction",
                   help="override the scenario's clean fraction (default: by index)")
    g.add_argument("--clean-sigma", type=float, dest="clean_sigma",
                   help="noise scale of clean rows (default: 1.0)")
    g.add_argument("--contaminated-sigma", type=float, dest="contaminated_sigma",
                   help="noise scale of contaminated rows (default: 10.0)")
    g.add_argument("--sigmas", type=_floats,
                   help="comma-separated noise-scale ladder for the hetero design "
                        "(default: the built-in 10-value ladder)")
    g.add_argument("--x-rule", dest="x_rule",
                   help="covariate recipe, e.g. ramp:0.01 or ramp:0.005:1.0 "
                        "(default: per design)")
    g.add_argument("--config", metavar="PATH",
                   help="JSON file of request fields; explicit flags override it")
    g.add_argument("--csv", metavar="PATH",
                   help="also dump the dataset itself to a CSV file")
    add_out(g)
    g.set_defaults(func=_cmd_generate)

    # fit ---------------------------------------------------------------------
    f = sub.add_parser(
        "fit", help="fit a CSV dataset",
        description="Fit the moving-block robust estimator and/or plain "
                    "least squares to a CSV file.",
    )
    f.add_argument("--csv", required=True, metavar="PATH", help="input CSV file")
    f.add_argument("--y", default="y", help="response column name (default: y)")
    f.add_argument("--x", type=lambda s: [c.strip() for c in s.split(",") if c.strip()],
                   default=["x"],
                   help="comma-separated covariate column names (default: x)")
    f.add_argument("--n", type=int,
                   help="block length (default: T//8, at least q+2)")
    f.add_argument("--n1", type=int,
                   help="centering window for the variance ceiling (default: 20)")
    f.add_argument("--estimator", choices=("robust", "ols", "both"), default="robust",
                   help="which fit to run (default: robust)")
    f.add_argument("--f-df", type=_df_pair, dest="f_df", metavar="NUM,DEN",
                   help="F-statistic degrees of freedom for the ols fit "
                        "(default: q,n-q-1)")
    f.add_argument("--diagnostics", action="store_true",
                   help="include per-block traces in the report (default: off)")
    add_out(f)
    f.set_defaults(func=_cmd_fit)

    # gexp ----------------------------------------------------------------------
    x = sub.add_parser(
        "gexp", help="evaluate a variance-band expectation",
        description="Evaluate the sublinear expectation of a payoff of a "
                    "zero-mean variable whose variance ranges over a band.",
    )
    x.add_argument("--payoff", choices=PAYOFF_NAMES, required=True,
                   help="payoff from the built-in family")
    x.add_argument("--strike", type=float, default=1.0,
                   help="strike for the call payoff (default: 1.0)")
    x.add_argument("--sigma-lo", type=float, dest="sigma_lo", required=True,
                   help="lower volatility bound (variance band uses its square)")
    x.add_argument("--sigma-hi", type=float, dest="sigma_hi", required=True,
                   help="upper volatility bound (variance band uses its square)")
    x.add_argument("--horizon", type=float, default=1.0,
                   help="time horizon (default: 1.0)")
    x.add_argument("--shift", type=float, default=0.0,
                   help="evaluation point / starting value (default: 0.0)")
    x.add_argument("--method", choices=("pde", "dp", "both"), default="pde",
                   help="solver: explicit march, dynamic program, or both "
                        "(default: pde)")
    x.add_argument("--nx", type=int, default=DEFAULT_NX,
                   help=f"spatial grid points (default: {DEFAULT_NX})")
    x.add_argument("--steps", type=int, default=100,
                   help="dynamic-program stages (default: 100)")
    x.add_argument("--quad-nodes", type=int, dest="quad_nodes", default=21,
                   help="quadrature nodes per stage (default: 21)")
    x.add_argument("--trace", action="store_true",
                   help="include the terminal value profile as a two-column "
                        "series (default: off)")
    add_out(x)
    x.set_defaults(func=_cmd_gexp)

    # bench ----------------------------------------------------------------------
    b = sub.add_parser(
        "bench", help="run a replication table",
        description="Run a named simulation design over R seeded "
                    "replications and report per-cell aggregates.",
    )
    b.add_argument("--design", choices=DESIGNS, required=True, help="table design")
    b.add_argument("--reps", type=int, default=500,
                   help="replications per cell (default: 500)")
    b.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"base seed (default: {DEFAULT_SEED})")
    b.add_argument("--stream-base", type=int, dest="stream_base", default=0,
                   help="first stream id (default: 0)")
    b.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes; affects speed only, never results "
                        "(default: available cores)")
    b.add_argument("--t-values", type=_ints, dest="t_values", metavar="T1,T2,...",
                   help="override the design's sample-size grid "
                        "(default: per design)")
    b.add_argument("--n", type=int,
                   help="block length for grouped/hetero designs "
                        "(default: per design)")
    b.add_argument("--n-values", type=_ints, dest="n_values", metavar="N1,N2,...",
                   help="block-length grid for the table2 design "
                        "(default: 60,80,160,200)")
    b.add_argument("--n0", type=int, default=200,
                   help="group length for grouped designs (default: 200)")
    b.add_argument("--n1", type=int, default=20,
                   help="centering window (default: 20)")
    b.add_argument("--beta", type=float, default=1.0,
                   help="generating slope (default: 1.0)")
    b.add_argument("--scenarios", type=_ints, metavar="M1,M2,...",
                   help="contamination scenario subset (default: per design)")
    b.add_argument("--scenario-t", type=int, dest="scenario_t", default=200,
                   help="sample size for the scenarios design (default: 200)")
    b.add_argument("--block-rule", choices=("calibrated-fraction", "clean-count"),
                   dest="block_rule", default="calibrated-fraction",
                   help="scenario block-length rule (default: calibrated-fraction)")
    b.add_argument("--clean-sigma", type=float, dest="clean_sigma", default=1.0,
                   help="scenario noise scale on clean rows (default: 1.0)")
    b.add_argument("--contaminated-sigma", type=float, dest="contaminated_sigma",
                   default=10.0,
                   help="scenario noise scale on contaminated rows (default: 10.0)")
    add_out(b, formats=True)
    b.set_defaults(func=_cmd_bench)

    # sp500 ----------------------------------------------------------------------
    s = sub.add_parser(
        "sp500", help="yearly AR(1) fits of a close-price series",
        description="Fit AR(1) by plain least squares and by the "
                    "moving-block estimator over yearly windows of a daily "
                    "close-price CSV.",
    )
    s.add_argument("--csv", required=True, metavar="PATH",
                   help="CSV with date and close columns")
    s.add_argument("--date-col", dest="date_col", default="date",
                   help="date column name (default: date)")
    s.add_argument("--close-col", dest="close_col", default="close",
                   help="close column name (default: close)")
    s.add_argument("--windows", type=_windows, metavar="S:E,S:E,...",
                   help="month windows start:end (end exclusive), e.g. "
                        "2015-07:2016-07 (default: the five windows ending "
                        "2020-07)")
    s.add_argument("--prep", choices=("log-returns", "levels"),
                   default="log-returns",
                   help="series preprocessing (default: log-returns)")
    s.add_argument("--n", type=int,
                   help="block length (default: T//8 per window)")
    s.add_argument("--n1", type=int, default=20,
                   help="centering window (default: 20)")
    s.add_argument("--fcrit", type=float, default=DEFAULT_F_CRIT,
                   help=f"F critical value for the significance flag "
                        f"(default: {DEFAULT_F_CRIT})")
    s.add_argument("--f-df", type=_df_pair, dest="f_df", metavar="NUM,DEN",
                   help="F degrees of freedom override (default: q,n-q-1 "
                        "per window)")
    s.add_argument("--mu-rule", choices=("block", "midpoint", "lower", "upper"),
                   dest="mu_rule", default="block",
                   help="intercept rule for robust predictions (default: block)")
    add_out(s, formats=True)
    s.set_defaults(func=_cmd_sp500)

    # serve ----------------------------------------------------------------------
    v = sub.add_parser(
        "serve", help="run the HTTP service",
        description="Serve every operation over HTTP with JSON bodies.",
    )
    v.add_argument("--host", default="127.0.0.1", help="bind host (default: 127.0.0.1)")
    v.add_argument("--port", type=int, default=8000, help="bind port (default: 8000)")
    v.set_defaults(func=_cmd_serve)

    return parser


def _fail(kind: str, exc: Exception, code: int) -> int:
    msg = " ".join(str(exc).split())  # collapse to a single line
    sys.stderr.write(f"error: {kind}: {msg}\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "verbose", False):
        import logging

        logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first.get("loc", ()))
        detail = f"{loc}: {first.get('msg', 'invalid value')}" if loc else first.get("msg", str(exc))
        return _fail("config", ValueError(detail), 2)
    except UncregError as exc:
        return _fail(type(exc).__name__, exc, 1)
    except OSError as exc:
        return _fail("io", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
