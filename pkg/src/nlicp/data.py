"""Multi-environment datasets and their comma-separated text form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


class MissingColumnError(DataError):
    """A referenced column is absent from the input."""


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    env: np.ndarray
    columns: list[str] = field(default_factory=list)
    target_name: str = "y"
    time: np.ndarray | None = None
    unit: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.env = np.asarray(self.env)
        n = self.y.shape[0]
        if self.X.shape[0] != n or self.env.shape[0] != n:
            raise DataError("X, y and env must have the same number of rows")
        if not self.columns:
            self.columns = [f"X{j + 1}" for j in range(self.X.shape[1])]
        if len(self.columns) != self.X.shape[1]:
            raise DataError("column names do not match X")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DataError("dataset contains missing or non-finite values")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def environments(self) -> np.ndarray:
        return np.unique(self.env)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise MissingColumnError(f"unknown column {name!r}") from None

    def subset(self, cols: Sequence[int]) -> np.ndarray:
        return self.X[:, list(cols)]


def _fmt(v: float) -> str:
    return repr(float(v)) if np.isfinite(v) else "nan"


def write_csv(data: Dataset, path: str | Path, *, env_name: str = "env") -> None:
    """Write ``data`` with a header row; floats keep full round-trip precision."""
    header = list(data.columns) + [data.target_name, env_name]
    extra = []
    if data.unit is not None:
        header.append("unit")
        extra.append(data.unit)
    if data.time is not None:
        header.append("time")
        extra.append(data.time)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [_fmt(v) for v in data.X[i]] + [_fmt(data.y[i]), str(int(data.env[i]))]
            row += [str(e[i]) for e in extra]
            w.writerow(row)


def read_csv(
    path: str | Path,
    target: str,
    env: str = "env",
    *,
    columns: Sequence[str] | None = None,
    time: str | None = None,
    unit: str | None = None,
) -> Dataset:
    """Load a dataset; predictors are all numeric columns except target/env/time/unit."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = list(reader)
    for name in (target, env, time, unit):
        if name is not None and name not in header:
            raise MissingColumnError(f"column {name!r} not found in header of {path}")
    reserved = {target, env, time, unit} - {None}
    predictors = list(columns) if columns is not None else [h for h in header if h not in reserved]
    for name in predictors:
        if name not in header:
            raise MissingColumnError(f"column {name!r} not found in header of {path}")

    pos = {h: i for i, h in enumerate(header)}
    X = np.empty((len(rows), len(predictors)))
    y = np.empty(len(rows))
    e = np.empty(len(rows), dtype=np.int64)
    t = np.empty(len(rows)) if time else None
    u = [] if unit else None
    for r, row in enumerate(rows):
        lineno = r + 2  # header is line 1
        if len(row) != len(header):
            raise DataError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            X[r] = [float(row[pos[c]]) for c in predictors]
            y[r] = float(row[pos[target]])
            if t is not None:
                t[r] = float(row[pos[time]])
        except ValueError as exc:
            raise DataError(f"row {lineno}: non-numeric cell ({exc})") from None
        try:
            ev = float(row[pos[env]])
        except ValueError:
            raise DataError(f"row {lineno}: environment label is not an integer") from None
        if ev != int(ev):
            raise DataError(f"row {lineno}: environment label is not an integer")
        e[r] = int(ev)
        if u is not None:
            u.append(row[pos[unit]])
        if not (np.all(np.isfinite(X[r])) and np.isfinite(y[r])):
            raise DataError(f"row {lineno}: missing or non-finite value")
    if len(rows) == 0:
        raise DataError(f"{path} has no data rows")
    if np.unique(e).size < 2:
        raise DataError("need >= 2 environments")
    return Dataset(
        X=X,
        y=y,
        env=e,
        columns=predictors,
        target_name=target,
        time=t,
        unit=np.asarray(u) if u is not None else None,
    )
