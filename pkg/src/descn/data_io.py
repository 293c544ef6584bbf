"""Tabular datasets: CSV reading/writing, standardisation and mini-batching."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

TRUTH_FIELDS = ("pi", "mu0", "mu1", "tau")


class TableError(ValueError):
    """Malformed table file or schema."""


@dataclass(frozen=True)
class Truth:
    pi: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    tau: np.ndarray

    def take(self, idx) -> "Truth":
        return Truth(self.pi[idx], self.mu0[idx], self.mu1[idx], self.tau[idx])


@dataclass(frozen=True)
class Dataset:
    """Covariates ``X`` (n, d), 0/1 treatment ``w`` and 0/1 outcome ``y``.

    ``truth`` carries the generating propensity and response surfaces when
    they are known (synthetic data only).
    """

    X: np.ndarray
    w: np.ndarray
    y: np.ndarray
    truth: Truth | None = None
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        n = self.X.shape[0]
        if self.w.shape != (n,) or self.y.shape != (n,):
            raise TableError("X, w and y must have matching row counts")
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{j}" for j in range(self.X.shape[1])))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> "Dataset":
        truth = self.truth.take(idx) if self.truth is not None else None
        return Dataset(self.X[idx], self.w[idx], self.y[idx], truth, self.feature_names)

    def without_truth(self) -> "Dataset":
        return replace(self, truth=None)


@dataclass(frozen=True)
class TableSchema:
    feature_columns: tuple[str, ...]
    treatment_column: str = "w"
    outcome_column: str = "y"
    truth_columns: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.feature_columns:
            raise TableError("schema needs at least one feature column")
        unknown = set(self.truth_columns) - set(TRUTH_FIELDS)
        if unknown:
            raise TableError(f"unknown truth fields {sorted(unknown)}")
        if self.truth_columns and set(self.truth_columns) != set(TRUTH_FIELDS):
            raise TableError("truth mapping must name all of pi, mu0, mu1, tau")
        names = list(self.columns)
        if len(set(names)) != len(names):
            raise TableError("schema column names must be distinct")

    @property
    def columns(self) -> tuple[str, ...]:
        truth = tuple(self.truth_columns[k] for k in TRUTH_FIELDS if k in self.truth_columns)
        return (*self.feature_columns, self.treatment_column, self.outcome_column, *truth)

    @classmethod
    def for_dataset(cls, ds: Dataset) -> "TableSchema":
        truth = {k: k for k in TRUTH_FIELDS} if ds.truth is not None else {}
        return cls(tuple(ds.feature_names), "w", "y", truth)

    @classmethod
    def infer(cls, header: list[str]) -> "TableSchema":
        """Default mapping: ``w``/``y`` columns, truth columns by name, rest are features."""
        truth = {k: k for k in TRUTH_FIELDS if k in header}
        if truth and len(truth) != len(TRUTH_FIELDS):
            truth = {}
        reserved = {"w", "y", *truth.values()}
        return cls(tuple(c for c in header if c not in reserved), "w", "y", truth)


def read_schema(path) -> TableSchema:
    """Load a schema file of ``key = value`` lines.

    Keys: ``features`` (comma-separated), ``treatment``, ``outcome`` and
    optionally ``truth.pi``, ``truth.mu0``, ``truth.mu1``, ``truth.tau``.
    """
    from .config import read_config

    cfg = read_config(path)
    if "features" not in cfg:
        raise TableError(f"{path}: schema needs a 'features' entry")
    truth = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("truth.")}
    return TableSchema(
        tuple(c.strip() for c in cfg["features"].split(",") if c.strip()),
        cfg.get("treatment", "w"),
        cfg.get("outcome", "y"),
        truth,
    )


def _binary(value: str, column: str, row: int) -> int:
    v = value.strip()
    if v in ("0", "1"):
        return int(v)
    try:
        f = float(v)
    except ValueError:
        f = None
    if f in (0.0, 1.0):
        return int(f)
    raise TableError(f"row {row}: column {column!r} must be 0 or 1, got {value!r}")


def iter_table(path, schema: TableSchema | None = None, chunk_rows: int = 65536) -> Iterator[Dataset]:
    """Stream a CSV file as a sequence of Dataset chunks of at most ``chunk_rows`` rows.

    Row numbers in error messages count data rows from 1 (the header is row 0).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        if schema is None:
            schema = TableSchema.infer(header)
        pos = {name: i for i, name in enumerate(header)}
        missing = [c for c in schema.columns if c not in pos]
        if missing:
            raise TableError(f"{path}: missing column(s) {missing}")
        f_idx = [pos[c] for c in schema.feature_columns]
        t_idx = [pos[schema.truth_columns[k]] for k in TRUTH_FIELDS] if schema.truth_columns else []
        w_i, y_i = pos[schema.treatment_column], pos[schema.outcome_column]
        ncol = len(header)

        def flush(xs, ws, ys, ts):
            X = np.array(xs, dtype=np.float64).reshape(len(xs), len(f_idx))
            truth = None
            if t_idx:
                T = np.array(ts, dtype=np.float64).reshape(len(ts), 4)
                truth = Truth(*(T[:, k].copy() for k in range(4)))
            return Dataset(X, np.array(ws, dtype=np.int64), np.array(ys, dtype=np.int64), truth,
                           tuple(schema.feature_columns))

        xs, ws, ys, ts = [], [], [], []
        row = 0
        for row, rec in enumerate(reader, start=1):
            if len(rec) != ncol:
                raise TableError(f"row {row}: expected {ncol} fields, got {len(rec)}")
            try:
                xs.append([float(rec[i]) for i in f_idx])
                if t_idx:
                    ts.append([float(rec[i]) for i in t_idx])
            except ValueError as exc:
                raise TableError(f"row {row}: non-numeric value ({exc})") from None
            ws.append(_binary(rec[w_i], schema.treatment_column, row))
            ys.append(_binary(rec[y_i], schema.outcome_column, row))
            if len(xs) >= chunk_rows:
                yield flush(xs, ws, ys, ts)
                xs, ws, ys, ts = [], [], [], []
        if xs or row == 0:
            yield flush(xs, ws, ys, ts)


def read_table(path, schema: TableSchema | None = None, chunk_rows: int = 65536) -> Dataset:
    """Read a whole CSV file into one Dataset, rows in file order."""
    chunks = list(iter_table(path, schema, chunk_rows))
    if len(chunks) == 1:
        return chunks[0]
    truth = None
    if chunks[0].truth is not None:
        truth = Truth(*(np.concatenate([getattr(c.truth, k) for c in chunks]) for k in TRUTH_FIELDS))
    return Dataset(
        np.concatenate([c.X for c in chunks]),
        np.concatenate([c.w for c in chunks]),
        np.concatenate([c.y for c in chunks]),
        truth,
        chunks[0].feature_names,
    )


def fmt_float(v: float) -> str:
    """17 significant digits: enough to round-trip any float64."""
    return format(float(v), ".17g")


def write_table(ds: Dataset, path) -> None:
    """Write ``ds`` as CSV: features, ``w``, ``y``, then truth columns if present."""
    schema = TableSchema.for_dataset(ds)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    truth_cols = [getattr(ds.truth, k) for k in TRUTH_FIELDS] if ds.truth is not None else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(schema.columns) + "\n")
        for i in range(ds.n):
            parts = [fmt_float(v) for v in ds.X[i]]
            parts.append(str(int(ds.w[i])))
            parts.append(str(int(ds.y[i])))
            parts.extend(fmt_float(c[i]) for c in truth_cols)
            fh.write(",".join(parts) + "\n")


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring fitted on training data.

    ``keep`` indexes the non-constant input columns; constant ones are dropped.
    """

    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray
    dropped: tuple[str, ...] = ()

    def apply(self, ds: Dataset) -> Dataset:
        return standardize(self, ds)


def fit_standardizer(train: Dataset) -> Standardizer:
    if train.n == 0:
        raise TableError("cannot fit a standardizer on an empty dataset")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    keep = np.flatnonzero(std > 0)
    dropped = tuple(train.feature_names[j] for j in range(train.d) if std[j] <= 0)
    if dropped:
        warnings.warn(f"dropping constant feature(s): {', '.join(dropped)}", stacklevel=2)
    return Standardizer(mean[keep], std[keep], keep, dropped)


def standardize(st: Standardizer, ds: Dataset) -> Dataset:
    X = (ds.X[:, st.keep] - st.mean) / st.std
    names = tuple(ds.feature_names[j] for j in st.keep)
    return Dataset(X, ds.w, ds.y, ds.truth, names)


def batch_iter(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Split a shuffled ``range(n)`` into consecutive batches.

    The permutation comes from PCG64 seeded with ``SeedSequence([seed, epoch,
    0x5EED])``, so it depends only on ``(seed, epoch)``. The last batch may be
    short.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if hasattr(n, "n"):
        n = n.n
    perm = np.random.default_rng([int(seed), int(epoch), 0x5EED]).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]
