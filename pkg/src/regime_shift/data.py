"""Observed series, ground truth and incremental interval moments.

Time indices in the public API are 1-based (``t = 1..n``) and change points
live in ``{2..n}``; row ``t`` of the series is stored at array row ``t - 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or non-finite input data."""


@dataclass(frozen=True)
class RegressionSeries:
    """Pairs ``(y_t, X_t)`` for ``t = 1..n`` with ``X_t`` in ``R^p``."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self) -> None:
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        if y.ndim != 1:
            raise DataError("y must be one-dimensional")
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError("X must be two-dimensional")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"y has {y.shape[0]} rows but X has {X.shape[0]}")
        if y.shape[0] < 1:
            raise DataError("no data rows")
        if X.shape[1] < 1:
            raise DataError("at least one covariate column is required")
        if not (np.isfinite(y).all() and np.isfinite(X).all()):
            raise DataError("series contains non-finite values")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows: np.ndarray) -> "RegressionSeries":
        """Series restricted to 0-based array ``rows`` (in the given order)."""
        return RegressionSeries(self.y[rows], self.X[rows])


@dataclass
class IntervalMoments:
    """Running ``sum X_t X_t^T``, ``sum y_t X_t`` and row count of an interval."""

    gram: np.ndarray
    cross: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, p: int) -> "IntervalMoments":
        return cls(np.zeros((p, p)), np.zeros(p), 0)

    @classmethod
    def from_rows(cls, series: RegressionSeries, start: int, stop: int) -> "IntervalMoments":
        """Batch moments of the 1-based half-open interval ``[start, stop)``."""
        if not 1 <= start <= stop <= series.n + 1:
            raise IndexError(f"interval [{start}, {stop}) outside 1..{series.n}")
        Xs = series.X[start - 1 : stop - 1]
        ys = series.y[start - 1 : stop - 1]
        return cls(Xs.T @ Xs, Xs.T @ ys, stop - start)

    @property
    def p(self) -> int:
        return self.cross.shape[0]


def accumulate(moments: IntervalMoments, t: int, series: RegressionSeries) -> IntervalMoments:
    """Return ``moments`` with the 1-based row ``t`` of ``series`` added.

    The input is left untouched. Only the upper triangle of the rank-one
    update is formed and then mirrored, so ``gram`` stays exactly symmetric.
    """
    if not 1 <= t <= series.n:
        raise IndexError(f"row index {t} outside 1..{series.n}")
    x = series.X[t - 1]
    outer = np.triu(np.outer(x, x))
    gram = moments.gram + outer + np.triu(outer, 1).T
    cross = moments.cross + series.y[t - 1] * x
    return IntervalMoments(gram, cross, moments.count + 1)


@dataclass(frozen=True)
class GroundTruth:
    """True change points, per-segment coefficients and jump sizes.

    ``change_points`` are 1-based, strictly increasing and inside ``{2..n}``;
    ``betas`` holds ``K + 1`` coefficient vectors, one per segment.
    """

    change_points: tuple[int, ...]
    betas: tuple[np.ndarray, ...]
    n: int
    kappa: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        cps = tuple(int(c) for c in self.change_points)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise DataError("change points must be strictly increasing")
        if cps and (cps[0] < 2 or cps[-1] > self.n):
            raise DataError("change points must lie in 2..n")
        if len(self.betas) != len(cps) + 1:
            raise DataError("need exactly one coefficient vector per segment")
        betas = tuple(np.asarray(b, dtype=np.float64) for b in self.betas)
        kappa = tuple(
            float(np.linalg.norm(betas[k + 1] - betas[k])) for k in range(len(cps))
        )
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "kappa", kappa)

    @property
    def K(self) -> int:
        return len(self.change_points)

    @property
    def min_spacing(self) -> int:
        bounds = (1, *self.change_points, self.n + 1)
        return min(b - a for a, b in zip(bounds, bounds[1:]))

    def beta_at(self, t: int) -> np.ndarray:
        """Coefficient vector in force at 1-based time ``t``."""
        k = int(np.searchsorted(np.asarray(self.change_points), t, side="right"))
        return self.betas[k]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "change_points": list(self.change_points),
            "kappa": list(self.kappa),
            "betas": [b.tolist() for b in self.betas],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(tuple(d["change_points"]), tuple(np.asarray(b) for b in d["betas"]), int(d["n"]))


def load_csv(
    path: str | Path,
    y_col: int = 0,
    x_cols: Sequence[int] | None = None,
    header: bool | None = None,
    add_intercept: bool = False,
) -> RegressionSeries:
    """Read a comma-separated file into a :class:`RegressionSeries`.

    Parameters
    ----------
    path
        File to read.
    y_col
        0-based column holding the response.
    x_cols
        0-based covariate columns; defaults to every column except ``y_col``.
    header
        ``True`` to skip the first row, ``False`` to parse it, ``None`` to
        skip it only if it does not parse as numbers.
    add_intercept
        Append a constant covariate column of ones.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc

    if rows and header is None:
        header = not _is_numeric_row(rows[0])
    if rows and header:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")

    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: ragged row {i + 1} has {len(r)} cells, expected {width}")
    if x_cols is None:
        x_cols = [c for c in range(width) if c != y_col]
    x_cols = list(x_cols)
    if not x_cols:
        raise DataError(f"{path}: no covariate columns (p = 0)")
    for c in (y_col, *x_cols):
        if not 0 <= c < width:
            raise DataError(f"{path}: column {c} out of range (file has {width} columns)")

    values = np.empty((len(rows), width))
    for i, r in enumerate(rows):
        for j, cell in enumerate(r):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at row {i + 1}, col {j}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: non-finite value at row {i + 1}, col {j}")
            values[i, j] = v

    X = values[:, x_cols]
    if add_intercept:
        X = np.column_stack([X, np.ones(len(rows))])
    return RegressionSeries(values[:, y_col], X)


def _is_numeric_row(row: Sequence[str]) -> bool:
    try:
        for cell in row:
            float(cell)
    except ValueError:
        return False
    return True


def write_csv(path: str | Path, series: RegressionSeries, header: bool = True) -> None:
    """Write ``series`` with ``y`` in column 0 followed by the covariates."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(["y", *(f"x{j + 1}" for j in range(series.p))])
        for t in range(series.n):
            w.writerow([repr(float(series.y[t])), *(repr(float(v)) for v in series.X[t])])
