"""Datasets, CSV ingestion, splitting and standardisation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Standardizer:
    """Per-column centring and scaling fitted on a training split."""

    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: float
    y_sd: float

    @classmethod
    def fit(cls, x: np.ndarray, y: np.ndarray) -> "Standardizer":
        x_sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.ones(x.shape[1])
        x_sd = np.where(x_sd > 0, x_sd, 1.0)
        y_sd = float(y.std(ddof=1)) if y.size > 1 else 1.0
        return cls(x.mean(axis=0), x_sd, float(y.mean()), y_sd if y_sd > 0 else 1.0)

    @classmethod
    def identity(cls, p: int) -> "Standardizer":
        return cls(np.zeros(p), np.ones(p), 0.0, 1.0)

    def x(self, x) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=np.float64)) - self.x_mean) / self.x_sd

    def y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_sd

    def y_back(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.y_sd + self.y_mean

    def to_dict(self) -> dict:
        return {"x_mean": self.x_mean.tolist(), "x_sd": self.x_sd.tolist(),
                "y_mean": self.y_mean, "y_sd": self.y_sd}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["x_mean"], dtype=np.float64), np.asarray(d["x_sd"], dtype=np.float64),
                   float(d["y_mean"]), float(d["y_sd"]))


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    columns: list[str] = field(default_factory=list)
    target: str = "y"

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.x.shape[0] != self.y.size:
            raise DataError(f"{self.x.shape[0]} covariate rows but {self.y.size} responses")
        if self.x.shape[1] < 1:
            raise DataError("need at least one covariate column")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise DataError("dataset contains non-finite values")
        if not self.columns:
            self.columns = [f"x{j + 1}" for j in range(self.x.shape[1])]

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], list(self.columns), self.target)


def _read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a headed CSV, with located errors."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        # row numbers count the header as row 1
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}")
            values = []
            for col, cell in zip(header, row):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"{path}: missing value at (row {rownum}, column {col!r})")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: non-numeric value {cell!r} at (row {rownum}, column {col!r})") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: non-finite value at (row {rownum}, column {col!r})")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=np.float64)


def load_csv(path, target_column: str) -> Dataset:
    """Read a headed numeric CSV; ``target_column`` becomes the response."""
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline()
    header = [h.strip() for h in next(csv.reader([first]))] if first else []
    if first and target_column not in header:
        raise DataError(f"{path}: target column {target_column!r} not found in header {header}")
    header, table = _read_table(path)
    t = header.index(target_column)
    keep = [j for j in range(len(header)) if j != t]
    return Dataset(table[:, keep], table[:, t], [header[j] for j in keep], target_column)


def load_covariates(path, columns: list[str]) -> np.ndarray:
    """Covariate matrix with ``columns`` in the given order; other columns are ignored."""
    header, table = _read_table(path)
    missing = [c for c in columns if c not in header]
    if missing:
        raise DataError(f"{path}: covariate columns {missing} not found in header {header}")
    return table[:, [header.index(c) for c in columns]]


def write_csv(path, data: Dataset) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*data.columns, data.target])
        for xi, yi in zip(data.x, data.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def split_sizes(n: int, fractions=(0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise DataError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    n_train = math.floor(fractions[0] * n + 1e-9)
    n_val = math.floor(fractions[1] * n + 1e-9)
    return n_train, n_val, n - n_train - n_val


def split(data: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded permutation, then contiguous train/validation/test blocks."""
    n_train, n_val, n_test = split_sizes(data.n, fractions)
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"n={data.n} with fractions {fractions} leaves an empty split "
                        f"({n_train}/{n_val}/{n_test})")
    perm = np.random.default_rng(seed).permutation(data.n)
    return (data.subset(perm[:n_train]),
            data.subset(perm[n_train:n_train + n_val]),
            data.subset(perm[n_train + n_val:]))
