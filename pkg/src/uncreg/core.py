"""Shared primitives: datasets, CSV I/O, seeded RNG streams, reports.

Everything downstream (estimators, generators, the benchmark harness, the
service layer) works in terms of the small container types defined here, so
the conventions are centralized:

* a :class:`Dataset` is an immutable (x, y) pair with x of shape (T, q) and
  y of shape (T,), row order meaningful (the block estimator is
  order-sensitive);
* randomness is only ever drawn through :class:`SeededRng`, which pins a
  (seed, stream) pair to a reproducible generator;
* reports are plain JSON-compatible dicts written atomically.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------

class UncregError(Exception):
    """Base class for all errors raised by this package."""


class DataError(UncregError):
    """Malformed or unusable input data (bad CSV cell, non-finite value)."""


class ConfigError(UncregError):
    """Invalid configuration or argument combination.

    The CLI maps this to a usage error (exit code 2); everything else maps
    to a runtime error (exit code 1).
    """


class RankDeficiencyError(UncregError):
    """Design matrix (or a required block of it) is numerically singular."""


class StabilityError(UncregError):
    """Explicit PDE step size violates the stability bound."""


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

def _as_matrix(x: Sequence | np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"covariates must be 1- or 2-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable regression sample: covariates x (T, q) and response y (T,).

    Row order is part of the data; the moving-block estimator scans
    contiguous index ranges, so permuting rows changes its output.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = _as_matrix(self.x)
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1:
            raise DataError(f"response must be 1-dimensional, got shape {y.shape}")
        if x.shape[0] != y.shape[0]:
            raise DataError(
                f"covariates have {x.shape[0]} rows but response has {y.shape[0]}"
            )
        if x.shape[0] < 2:
            raise DataError("a dataset needs at least 2 rows")
        if x.shape[1] < 1:
            raise DataError("a dataset needs at least 1 covariate column")
        if not np.all(np.isfinite(x)):
            t, j = np.argwhere(~np.isfinite(x))[0]
            raise DataError(f"non-finite covariate at row {t + 1}, column {j + 1}")
        if not np.all(np.isfinite(y)):
            t = int(np.flatnonzero(~np.isfinite(y))[0])
            raise DataError(f"non-finite response at row {t + 1}")
        x = x.copy()
        y = y.copy()
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def t(self) -> int:
        return self.x.shape[0]

    @property
    def q(self) -> int:
        return self.x.shape[1]

    def block(self, start: int, length: int) -> "Dataset":
        """Contiguous sub-sample rows [start, start + length), 0-based."""
        if start < 0 or length < 2 or start + length > len(self):
            raise ConfigError(
                f"block [{start}, {start + length}) out of range for T={len(self)}"
            )
        return Dataset(self.x[start : start + length], self.y[start : start + length])

    def digest(self) -> str:
        """sha256 over the raw float64 bytes of (x, y); identifies the input."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()


class Sample(tuple):
    """One observation (x row, y value); mostly a documentation type."""

    __slots__ = ()

    def __new__(cls, x, y):
        return super().__new__(cls, (np.asarray(x, dtype=float), float(y)))

    @property
    def x(self) -> np.ndarray:
        return self[0]

    @property
    def y(self) -> float:
        return self[1]


@dataclass(frozen=True)
class UncertaintyEnvelope:
    """Interval estimates for the intercept band and the variance band.

    ``validate()`` enforces the ordered-band invariants and is called on
    every user-supplied band. Fit outputs are reported as computed: in the
    degenerate single-block configuration (n = T) the window-centered upper
    variance estimate can fall below the lower one, and clamping would
    silently distort the estimator.
    """

    mu_lo: float
    mu_hi: float
    sigma2_lo: float
    sigma2_hi: float

    def validate(self) -> "UncertaintyEnvelope":
        if not (self.mu_lo <= self.mu_hi):
            raise ConfigError(f"mean band is not ordered: ({self.mu_lo}, {self.mu_hi})")
        if not (0.0 <= self.sigma2_lo <= self.sigma2_hi):
            raise ConfigError(
                f"variance band must satisfy 0 <= lo <= hi, got ({self.sigma2_lo}, {self.sigma2_hi})"
            )
        return self

    @property
    def sigma_lo(self) -> float:
        return math.sqrt(max(self.sigma2_lo, 0.0))

    @property
    def sigma_hi(self) -> float:
        return math.sqrt(max(self.sigma2_hi, 0.0))


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------
# Single supported format: one header line, comma separator, '.' decimal
# point. Anything unparseable is a hard error naming the offending cell;
# silent coercion hides exactly the contamination the estimator is for.

def load_csv(path: str | os.PathLike, y_col: str, x_cols: Sequence[str]) -> Dataset:
    """Load a dataset from a headered CSV file.

    Parameters
    ----------
    path : file to read.
    y_col : header name of the response column.
    x_cols : header names of the covariate columns, in order.
    """
    if not x_cols:
        raise ConfigError("at least one covariate column is required")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        cols = list(x_cols) + [y_col]
        missing = [c for c in cols if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}; header is {header}")
        idx = {c: header.index(c) for c in cols}
        xs: list[list[float]] = []
        ys: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise DataError(f"{path}: line {lineno} has {len(row)} cells, expected {len(header)}")
            rec = []
            for c in cols:
                cell = row[idx[c]].strip()
                try:
                    val = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {c!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(val):
                    raise DataError(f"{path}: line {lineno}, column {c!r}: non-finite value {cell!r}")
                rec.append(val)
            xs.append(rec[:-1])
            ys.append(rec[-1])
    if not ys:
        raise DataError(f"{path}: no data rows")
    if len(ys) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(ys)}")
    return Dataset(np.array(xs, dtype=float), np.array(ys, dtype=float))


def save_csv(
    data: Dataset,
    path: str | os.PathLike,
    y_col: str = "y",
    x_cols: Sequence[str] | None = None,
) -> None:
    """Write a dataset as headered CSV, full round-trip precision."""
    if x_cols is None:
        x_cols = [f"x{j + 1}" for j in range(data.q)] if data.q > 1 else ["x"]
    if len(x_cols) != data.q:
        raise ConfigError(f"{len(x_cols)} covariate names for q={data.q} columns")
    rows = [list(x_cols) + [y_col]]
    for i in range(len(data)):
        rows.append([repr(float(v)) for v in data.x[i]] + [repr(float(data.y[i]))])
    _atomic_write_text(path, "\r\n".join(",".join(r) for r in rows) + "\r\n")


def log_returns(data: Dataset) -> Dataset:
    """Log returns of a price series stored in the response column.

    Input convention: q = 1, x is an index/time stamp, y the price level.
    Output: x = 1..T-1 (the index of the earlier price), y_i = ln(p_{i+1}/p_i).
    """
    if data.q != 1:
        raise ConfigError(f"log_returns expects a single-column series, got q={data.q}")
    p = data.y
    if np.any(p <= 0.0):
        t = int(np.flatnonzero(p <= 0.0)[0])
        raise DataError(f"non-positive price at row {t + 1}; log returns undefined")
    r = np.diff(np.log(p))
    return Dataset(np.arange(1, len(p), dtype=float), r)


def ar1_dataset(series: np.ndarray) -> Dataset:
    """Pair a series with its own lag: x_i = s_i, y_i = s_{i+1}."""
    s = np.asarray(series, dtype=float)
    if s.ndim != 1 or s.size < 3:
        raise ConfigError("an AR(1) dataset needs a 1-d series of length >= 3")
    return Dataset(s[:-1], s[1:])


# ---------------------------------------------------------------------------
# seeded RNG streams
# ---------------------------------------------------------------------------

_U64 = 2**64


@dataclass(frozen=True)
class SeededRng:
    """A (seed, stream) pair naming one reproducible random stream.

    Equal pairs give bit-identical draws; distinct stream ids give
    statistically independent streams off the same seed (SeedSequence
    spawn keys). Benchmark replication r runs on stream ``base + r``.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        for name, v in (("seed", self.seed), ("stream", self.stream)):
            if not isinstance(v, (int, np.integer)) or not (0 <= int(v) < _U64):
                raise ConfigError(f"{name} must be an integer in [0, 2^64), got {v!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def with_stream(self, stream: int) -> "SeededRng":
        return replace(self, stream=int(stream))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dumps accepts them."""
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return obj


def _atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write-then-rename so a crash never leaves a truncated file."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".uncreg-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_report(report: Mapping, path: str | os.PathLike) -> None:
    """Serialize a report dict to JSON and write it atomically."""
    _atomic_write_text(path, json.dumps(jsonable(report), indent=2) + "\n")


def make_report(kind: str, config: Mapping, **sections) -> dict:
    """Assemble the common report envelope: kind, effective config, payload.

    Every report carries the full effective config (defaults resolved) and,
    where an input dataset exists, its digest, so a report alone is enough
    to rerun the computation.
    """
    report = {"kind": kind, "config": jsonable(dict(config))}
    for key, val in sections.items():
        report[key] = jsonable(val)
    return report
