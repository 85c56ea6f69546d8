"""Benchmark harness: reproduce the simulation tables and the equity study.

Five simulation designs, each a grid of cells run for R replications:

* ``table1``: grouped design, T grid, fixed (n0, n, n1) = (200, 150, 20);
* ``table2``: grouped design at T = 1600, block-length sweep;
* ``scenarios``: contaminated-tail scenarios 1..6 at T = 200, MSE of the
  slope for plain LSE vs the moving-block fit;
* ``scenarios_large_t``: scenarios 1 and 4 over a T grid, MSE traces;
* ``hetero``: fixed volatility ladder, T grid, recovered variance band.

Replication r of cell c always runs on stream
``stream_base + c * replications + r`` of the base seed, so any cell (or any
single replication) can be reproduced in isolation and the harness can fan
replications out over processes without changing a single draw. Reports are
deterministic given (seed, stream_base, spec).

The contaminated scenarios need a block length. The default rule
("calibrated-fraction") sets n = round(f(a) * T) where a is the clean
fraction and f is a fixed piecewise-linear table of tuning constants,
anchored at f(0.50)=0.450, f(0.70)=0.590, f(0.80)=0.700, f(0.85)=0.750,
f(0.90)=0.850, f(0.95)=0.875. The alternative "clean-count" rule uses the
longest block that can still avoid the contaminated tail, n = floor(a * T).
Every report echoes the rule and the resolved block length per cell.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ConfigError,
    DataError,
    Dataset,
    SeededRng,
    UncregError,
    ar1_dataset,
    jsonable,
    make_report,
    write_report,
)
from .dgp import (
    DEFAULT_CLEAN_FRACTIONS,
    DEFAULT_VOLATILITY_LADDER,
    DgpConfig,
    HeteroConfig,
    ScenarioConfig,
    generate_grouped,
    generate_hetero,
    generate_scenario,
)
from .ols import f_from_r2, f_statistic, ols_fit
from .robust import default_block_length, predict, robust_lse_fit

DESIGNS = ("table1", "table2", "scenarios", "scenarios_large_t", "hetero")

# 1% critical value for an F with (2, 247) degrees of freedom; the equity
# study's significance flag defaults to it but any value can be supplied.
DEFAULT_F_CRIT = 4.6921

DEFAULT_SEED = 42


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark run: a design plus its grid and replication budget."""

    design: str
    replications: int = 500
    seed: int = DEFAULT_SEED
    stream_base: int = 0
    threads: int = 1
    t_values: tuple[int, ...] | None = None
    n: int | None = None                      # block length (grouped/hetero designs)
    n_values: tuple[int, ...] | None = None   # block-length sweep (table2)
    n0: int = 200
    n1: int = 20
    beta: float = 1.0
    eta_range: tuple[float, float] = (0.0, 5.0)
    sigma_range: tuple[float, float] = (0.1, 1.0)
    scenarios: tuple[int, ...] | None = None
    scenario_t: int = 200
    block_rule: str = "calibrated-fraction"
    clean_sigma: float = 1.0
    contaminated_sigma: float = 10.0

    def __post_init__(self) -> None:
        if self.design not in DESIGNS:
            raise ConfigError(f"unknown design {self.design!r}; choose from {DESIGNS}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.block_rule not in ("calibrated-fraction", "clean-count"):
            raise ConfigError(f"unknown scenario block rule {self.block_rule!r}")
        if self.clean_sigma < 0 or self.contaminated_sigma < 0:
            raise ConfigError("scenario noise scales must be >= 0")


@dataclass
class TableReport:
    """Aggregated benchmark output: cells, plot traces, run notes."""

    design: str
    config: dict
    cells: list[dict]
    traces: dict[str, list[list[float]]]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return make_report(
            "bench-report",
            self.config,
            design=self.design,
            cells=self.cells,
            traces=self.traces,
            notes=self.notes,
        )

    def save(self, path) -> None:
        write_report(self.to_dict(), path)

    def to_text(self) -> str:
        """Aligned key = value listing, one section per cell."""
        return report_text(self.to_dict())


def report_text(report: dict) -> str:
    """Render a bench report dict as an aligned key = value listing."""
    lines = [f"design: {report.get('design', '?')}"]
    config = report.get("config", {})
    for key in ("replications", "seed", "stream_base"):
        if key in config:
            lines.append(f"{key}: {config[key]}")
    for cell in report.get("cells", []):
        params = cell.get("params", {})
        head = ", ".join(f"{k}={v}" for k, v in params.items())
        lines.append("")
        lines.append(f"[{head}]")
        if "error" in cell:
            lines.append(f"  error = {cell['error']}")
            continue
        flat = _flatten(cell.get("stats", cell))
        width = max((len(k) for k in flat), default=0)
        for k, v in flat.items():
            if isinstance(v, float):
                lines.append(f"  {k:<{width}} = {v: .4f}")
            else:
                lines.append(f"  {k:<{width}} = {v}")
    notes = report.get("notes", [])
    if notes:
        lines.append("")
        lines.extend(f"note: {n}" for n in notes)
    return "\n".join(lines) + "\n"


def _flatten(d: dict, prefix: str = "") -> dict:
    out: dict = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


# ---------------------------------------------------------------------------
# cell construction and the per-replication worker
# ---------------------------------------------------------------------------

def _grid(spec: ExperimentSpec) -> list[dict]:
    """Expand a spec into per-cell parameter dicts (all plain primitives)."""
    common = {
        "beta": spec.beta,
        "n1": spec.n1,
    }
    if spec.design == "table1":
        ts = spec.t_values or (400, 800, 1600, 3200)
        n = spec.n if spec.n is not None else 150
        return [
            {"design": "grouped", "t": t, "n0": spec.n0, "n": n,
             "eta_range": spec.eta_range, "sigma_range": spec.sigma_range, **common}
            for t in ts
        ]
    if spec.design == "table2":
        ts = spec.t_values or (1600,)
        ns = spec.n_values or (60, 80, 160, 200)
        return [
            {"design": "grouped", "t": t, "n0": spec.n0, "n": n,
             "eta_range": spec.eta_range, "sigma_range": spec.sigma_range, **common}
            for t in ts
            for n in ns
        ]
    if spec.design == "scenarios":
        ms = spec.scenarios or tuple(range(1, len(DEFAULT_CLEAN_FRACTIONS) + 1))
        return [
            {"design": "scenario", "t": spec.scenario_t, "m": m,
             "block_rule": spec.block_rule, "clean_sigma": spec.clean_sigma,
             "contaminated_sigma": spec.contaminated_sigma, **common}
            for m in ms
        ]
    if spec.design == "scenarios_large_t":
        ts = spec.t_values or (200, 400, 600, 800, 1000)
        ms = spec.scenarios or (1, 4)
        return [
            {"design": "scenario", "t": t, "m": m, "block_rule": spec.block_rule,
             "clean_sigma": spec.clean_sigma,
             "contaminated_sigma": spec.contaminated_sigma, **common}
            for m in ms
            for t in ts
        ]
    if spec.design == "hetero":
        ts = spec.t_values or (500, 1000, 1500, 2000)
        cells = []
        for t in ts:
            n0 = t // len(DEFAULT_VOLATILITY_LADDER)
            n = spec.n if spec.n is not None else max(3, round(0.75 * n0))
            cells.append({"design": "hetero", "t": t, "n": n, **common})
        return cells
    raise ConfigError(f"unknown design {spec.design!r}")


# Block length as a fraction of the sample size, keyed by clean fraction.
# Fixed tuning constants; values between anchors are linearly interpolated.
_BLOCK_FRACTION_ANCHORS = (
    (0.50, 0.450),
    (0.70, 0.590),
    (0.80, 0.700),
    (0.85, 0.750),
    (0.90, 0.850),
    (0.95, 0.875),
)


def _scenario_block_length(cell: dict) -> int:
    a = DEFAULT_CLEAN_FRACTIONS[cell["m"] - 1]
    t = cell["t"]
    clean = int(a * t)  # longest block that can sit entirely on clean rows
    if cell.get("block_rule", "calibrated-fraction") == "clean-count":
        n = clean
    else:
        anchors_a = [p[0] for p in _BLOCK_FRACTION_ANCHORS]
        anchors_f = [p[1] for p in _BLOCK_FRACTION_ANCHORS]
        n = round(float(np.interp(a, anchors_a, anchors_f)) * t)
    return max(3, min(n, clean, t))


def _run_rep(cell: dict, seed: int, stream: int) -> dict:
    """One replication of one cell; pure function of (cell, seed, stream)."""
    rng = SeededRng(seed, stream)
    kind = cell["design"]
    if kind == "grouped":
        cfg = DgpConfig(
            t=cell["t"], n0=cell["n0"], beta=cell["beta"],
            eta_range=tuple(cell["eta_range"]), sigma_range=tuple(cell["sigma_range"]),
        )
        data, truth = generate_grouped(cfg, rng)
        rfit = robust_lse_fit(data, n=cell["n"], n1=min(cell["n1"], cell["n"]))
        ofit = ols_fit(data)
        return {
            "rlse_beta": float(rfit.beta_hat[0]),
            "rlse_mu_lo": rfit.envelope.mu_lo,
            "rlse_mu_hi": rfit.envelope.mu_hi,
            "rlse_sigma_lo": rfit.envelope.sigma_lo,
            "rlse_sigma_hi": rfit.envelope.sigma_hi,
            "lse_beta": float(ofit.beta[0]),
            "lse_mu": ofit.mu,
            "lse_sigma": math.sqrt(ofit.mse),
            "true_eta_min": truth.eta_min,
            "true_eta_max": truth.eta_max,
            "true_sigma_min": truth.sigma_min,
            "true_sigma_max": truth.sigma_max,
        }
    if kind == "scenario":
        cfg = ScenarioConfig.for_scenario(
            cell["m"], cell["t"], beta=cell["beta"],
            clean_sigma=cell.get("clean_sigma", 1.0),
            contaminated_sigma=cell.get("contaminated_sigma", 10.0),
        )
        data, _ = generate_scenario(cfg, rng)
        n = _scenario_block_length(cell)
        rfit = robust_lse_fit(data, n=n, n1=min(cell["n1"], n))
        ofit = ols_fit(data)
        return {
            "rlse_beta": float(rfit.beta_hat[0]),
            "lse_beta": float(ofit.beta[0]),
        }
    if kind == "hetero":
        cfg = HeteroConfig(t=cell["t"], beta=cell["beta"])
        data, truth = generate_hetero(cfg, rng)
        rfit = robust_lse_fit(data, n=cell["n"], n1=min(cell["n1"], cell["n"]))
        ofit = ols_fit(data)
        return {
            "rlse_beta": float(rfit.beta_hat[0]),
            "rlse_sigma_lo": rfit.envelope.sigma_lo,
            "rlse_sigma_hi": rfit.envelope.sigma_hi,
            "lse_beta": float(ofit.beta[0]),
            "lse_sigma": math.sqrt(ofit.mse),
            "true_sigma_min": truth.sigma_min,
            "true_sigma_max": truth.sigma_max,
        }
    raise ConfigError(f"unknown cell kind {kind!r}")


def _star_rep(args) -> dict:
    return _run_rep(*args)


def _collect(cell: dict, rows: list[dict], beta0: float) -> dict:
    """Aggregate replication rows into the cell's stats block."""
    cols = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    stats: dict = {}
    for est in ("rlse", "lse"):
        b = cols[f"{est}_beta"]
        block = {
            "beta_mean": float(b.mean()),
            "beta_sd": float(b.std(ddof=1)) if b.size > 1 else 0.0,
            "beta_mse": float(np.mean((b - beta0) ** 2)),
        }
        for k in cols:
            if k.startswith(f"{est}_") and k != f"{est}_beta":
                block[k[len(est) + 1 :] + "_mean"] = float(cols[k].mean())
        stats[est] = block
    truth = {k[5:] + "_mean": float(cols[k].mean()) for k in cols if k.startswith("true_")}
    if truth:
        stats["truth"] = truth
    return stats


def run_experiment(spec: ExperimentSpec) -> TableReport:
    """Run a simulation design and aggregate its cells."""
    cells = _grid(spec)
    report_cells: list[dict] = []
    for c, cell in enumerate(cells):
        base = spec.stream_base + c * spec.replications
        tasks = [(cell, spec.seed, base + r) for r in range(spec.replications)]
        if spec.threads > 1:
            chunk = max(1, spec.replications // (spec.threads * 8))
            with ProcessPoolExecutor(max_workers=spec.threads) as ex:
                rows = list(ex.map(_star_rep, tasks, chunksize=chunk))
        else:
            rows = [_run_rep(*t) for t in tasks]
        params = {k: v for k, v in cell.items() if k not in ("eta_range", "sigma_range")}
        if cell["design"] == "scenario":
            params["clean_fraction"] = DEFAULT_CLEAN_FRACTIONS[cell["m"] - 1]
            params["block_n"] = _scenario_block_length(cell)
        report_cells.append({
            "params": params,
            "stream_base": base,
            "stats": _collect(cell, rows, cell["beta"]),
        })

    traces = _traces(spec, report_cells)
    config = {
        "design": spec.design,
        "replications": spec.replications,
        "seed": spec.seed,
        "stream_base": spec.stream_base,
        "stream_rule": "cell_index * replications + r + stream_base",
        "threads": spec.threads,
        "grid": [c["params"] for c in report_cells],
        "block_rule": spec.block_rule,
    }
    notes = [
        "slope MSE is measured against the generating beta",
        "sigma columns report volatilities (square roots of variance estimates)",
    ]
    if spec.design in ("scenarios", "scenarios_large_t"):
        if spec.block_rule == "clean-count":
            notes.append(
                "scenario block length follows the clean-count rule n = floor(a * T)"
            )
        else:
            anchors = ", ".join(f"f({a:g})={f:g}" for a, f in _BLOCK_FRACTION_ANCHORS)
            notes.append(
                "scenario block length follows the calibrated-fraction rule "
                f"n = round(f(a) * T) with anchors {anchors}, "
                "linearly interpolated between anchors"
            )
    return TableReport(
        design=spec.design, config=config, cells=report_cells, traces=traces, notes=notes
    )


def _traces(spec: ExperimentSpec, cells: list[dict]) -> dict[str, list[list[float]]]:
    traces: dict[str, list[list[float]]] = {}

    def add(name: str, x: float, y: float) -> None:
        traces.setdefault(name, []).append([float(x), float(y)])

    for cell in cells:
        p, s = cell["params"], cell["stats"]
        if spec.design in ("table1", "hetero"):
            add("rlse_beta_mean_vs_t", p["t"], s["rlse"]["beta_mean"])
            add("lse_beta_mean_vs_t", p["t"], s["lse"]["beta_mean"])
            if spec.design == "hetero":
                add("rlse_sigma_lo_vs_t", p["t"], s["rlse"]["sigma_lo_mean"])
                add("rlse_sigma_hi_vs_t", p["t"], s["rlse"]["sigma_hi_mean"])
        elif spec.design == "table2":
            add("rlse_beta_mean_vs_n", p["n"], s["rlse"]["beta_mean"])
        elif spec.design == "scenarios":
            add("rlse_beta_mse_vs_scenario", p["m"], s["rlse"]["beta_mse"])
            add("lse_beta_mse_vs_scenario", p["m"], s["lse"]["beta_mse"])
        elif spec.design == "scenarios_large_t":
            add(f"rlse_beta_mse_vs_t_scenario{p['m']}", p["t"], s["rlse"]["beta_mse"])
            add(f"lse_beta_mse_vs_t_scenario{p['m']}", p["t"], s["lse"]["beta_mse"])
    return traces


# ---------------------------------------------------------------------------
# equity study
# ---------------------------------------------------------------------------

def load_price_series(path, date_col: str = "date", close_col: str = "close"):
    """Read a (date, close) CSV; returns (dates as YYYY-MM-DD strings, closes)."""
    import csv

    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    dates: list[str] = []
    closes: list[float] = []
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        for col in (date_col, close_col):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r}; header is {header}")
        di, ci = header.index(date_col), header.index(close_col)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            date = row[di].strip()
            if len(date) < 7 or date[4] != "-":
                raise DataError(f"{path}: line {lineno}: date {date!r} is not YYYY-MM-DD")
            try:
                close = float(row[ci])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: cannot parse close {row[ci]!r}") from None
            if not math.isfinite(close) or close <= 0.0:
                raise DataError(f"{path}: line {lineno}: close must be a positive number")
            dates.append(date)
            closes.append(close)
    if len(dates) < 3:
        raise DataError(f"{path}: need at least 3 price rows, found {len(dates)}")
    if any(a > b for a, b in zip(dates, dates[1:])):
        raise DataError(f"{path}: dates are not in chronological order")
    return dates, np.asarray(closes, dtype=float)


def month_windows(last: str = "2020-07", count: int = 5) -> list[tuple[str, str]]:
    """Consecutive 12-month [start, end) windows ending at `last`, newest first."""
    try:
        year, month = (int(p) for p in last.split("-"))
        if not 1 <= month <= 12:
            raise ValueError
    except ValueError:
        raise ConfigError(f"window anchor must be YYYY-MM, got {last!r}") from None
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    out = []
    for k in range(count):
        end = f"{year - k:04d}-{month:02d}"
        start = f"{year - k - 1:04d}-{month:02d}"
        out.append((start, end))
    return out


MIN_WINDOW_ROWS = 30


def run_sp500(
    csv_path=None,
    *,
    dates: Sequence[str] | None = None,
    closes: Sequence[float] | None = None,
    date_col: str = "date",
    close_col: str = "close",
    windows: Sequence[tuple[str, str]] | None = None,
    use_levels: bool = False,
    n: int | None = None,
    n1: int = 20,
    f_crit: float = DEFAULT_F_CRIT,
    f_df: tuple[int, int] | None = None,
    mu_rule: str = "block",
) -> TableReport:
    """AR(1) fits (plain LSE vs moving-block) over yearly windows of a price file.

    Per window the close series is turned into log returns (or kept as
    levels), paired with its own lag, and fit both ways. The moving-block
    row reports the winning block's R-squared (the goodness of fit of the
    regression the procedure actually selected); the full-window R-squared
    under `mu_rule` is included alongside for transparency. Both F statistics
    use the same degrees of freedom: (q, n_window - q - 1) unless `f_df`
    overrides them.
    """
    if csv_path is not None:
        if dates is not None or closes is not None:
            raise ConfigError("pass either csv_path or (dates, closes), not both")
        dates, closes = load_price_series(csv_path, date_col, close_col)
        digest = hashlib.sha256(open(csv_path, "rb").read()).hexdigest()
    else:
        if dates is None or closes is None:
            raise ConfigError("run_sp500 needs csv_path or both dates and closes")
        closes = np.asarray(closes, dtype=float)
        h = hashlib.sha256()
        h.update("\n".join(dates).encode())
        h.update(closes.tobytes())
        digest = h.hexdigest()
    if windows is None:
        windows = month_windows()
    months = np.array([d[:7] for d in dates])

    cells: list[dict] = []
    n_sig = {"lse": 0, "rlse": 0}
    for start, end in windows:
        label = f"{start}:{end}"
        mask = (months >= start) & (months < end)
        rows = int(mask.sum())
        if rows < MIN_WINDOW_ROWS:
            cells.append({
                "params": {"window": label, "rows": rows},
                "error": f"DataError: window {label} has {rows} rows, "
                         f"fewer than the minimum {MIN_WINDOW_ROWS}",
            })
            continue
        prices = closes[mask]
        series = prices if use_levels else np.diff(np.log(prices))
        try:
            data = ar1_dataset(series)
            t = len(data)
            df = f_df if f_df is not None else (data.q, t - data.q - 1)

            ofit = ols_fit(data)
            f_lse = math.inf if ofit.r2 == 1.0 else f_from_r2(ofit.r2, *df)

            n_fit = n if n is not None else default_block_length(t, data.q)
            rfit = robust_lse_fit(data, n=n_fit, n1=min(n1, n_fit))
        except UncregError as exc:
            # A degenerate window (constant prices, too few usable rows) fails
            # alone; the remaining windows still run.
            cells.append({
                "params": {"window": label, "rows": rows},
                "error": f"{type(exc).__name__}: {exc}",
            })
            continue
        block = ols_fit(data.block(rfit.k_hat - 1, rfit.n))
        f_rlse = math.inf if block.r2 == 1.0 else f_from_r2(block.r2, *df)
        resid = data.y - predict(rfit, data.x, mu_rule)
        sst = float(np.sum((data.y - data.y.mean()) ** 2))
        r2_window = 1.0 - float(resid @ resid) / sst if sst > 0 else 0.0

        n_sig["lse"] += f_lse > f_crit
        n_sig["rlse"] += f_rlse > f_crit
        cells.append({
            "params": {"window": label, "rows": rows, "n_obs": t, "block_n": rfit.n},
            "stats": {
                "lse": {
                    "beta": float(ofit.beta[0]),
                    "r2": ofit.r2,
                    "f": f_lse,
                    "significant": bool(f_lse > f_crit),
                },
                "rlse": {
                    "beta": float(rfit.beta_hat[0]),
                    "r2": block.r2,
                    "f": f_rlse,
                    "significant": bool(f_rlse > f_crit),
                    "r2_window": r2_window,
                    "k_hat": rfit.k_hat,
                    "mu_lo": rfit.envelope.mu_lo,
                    "mu_hi": rfit.envelope.mu_hi,
                    "sigma_lo": rfit.envelope.sigma_lo,
                    "sigma_hi": rfit.envelope.sigma_hi,
                },
            },
        })

    fitted = [c for c in cells if "error" not in c]
    traces = {
        "lse_f_by_window": [[i, c["stats"]["lse"]["f"]] for i, c in enumerate(fitted)],
        "rlse_f_by_window": [[i, c["stats"]["rlse"]["f"]] for i, c in enumerate(fitted)],
    }
    config = {
        "input_digest": digest,
        "windows": [f"{s}:{e}" for s, e in windows],
        "preprocessing": "levels" if use_levels else "log-returns",
        "n": n,
        "n1": n1,
        "f_crit": f_crit,
        "f_df": list(f_df) if f_df is not None else "per-window (q, n - q - 1)",
        "mu_rule": mu_rule,
    }
    notes = [
        "moving-block r2/f are computed on the winning block; r2_window is the "
        f"full-window fit under mu_rule={mu_rule!r}",
        f"significance compares F against f_crit={f_crit}",
        f"significant windows: rlse {n_sig['rlse']} of {len(fitted)}, lse {n_sig['lse']} of {len(fitted)}",
    ]
    if len(fitted) < len(cells):
        notes.append(f"{len(cells) - len(fitted)} window(s) failed to fit and carry an error entry")
    report = TableReport(design="sp500", config=config, cells=cells, traces=traces, notes=notes)
    report.config["summary"] = {
        "windows": len(cells),
        "fitted": len(fitted),
        "rlse_significant": n_sig["rlse"],
        "lse_significant": n_sig["lse"],
    }
    return report
