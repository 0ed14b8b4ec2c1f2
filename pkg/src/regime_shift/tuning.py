"""Odd/even cross-validation of ``(lam, zeta)``.

The detector runs on the odd-indexed observations ``t = 1, 3, 5, ...``. A
change point at training position ``j`` maps to full index ``2j - 1``; every
even ``t`` is then predicted with the coefficients of the segment containing
it and the validation loss is the summed squared prediction error.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import RegressionSeries
from .dpdu import DetectorConfig, dpdu_solve_many

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.1, 0.5, 1.0, 2.0, 3.0)
DEFAULT_ZETAS = (10.0, 15.0, 20.0, 25.0)


@dataclass(frozen=True)
class TuningGrid:
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    zetas: tuple[float, ...] = DEFAULT_ZETAS

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        object.__setattr__(self, "zetas", tuple(float(v) for v in self.zetas))
        if not self.lambdas or not self.zetas:
            raise ValueError("grid must be nonempty")
        if any(v <= 0 for v in (*self.lambdas, *self.zetas)):
            raise ValueError("grid entries must be positive")


@dataclass
class CvCell:
    lam: float
    zeta: float
    loss: float
    change_points: tuple[int, ...] = ()  # in full-series coordinates
    segment_betas: list[np.ndarray] = field(default_factory=list, repr=False)
    error: str | None = None


@dataclass
class CvResult:
    lam: float
    zeta: float
    cells: list[CvCell]

    def table(self) -> list[dict]:
        return [
            {"lambda": c.lam, "zeta": c.zeta, "loss": c.loss,
             "change_points": list(c.change_points), "error": c.error}
            for c in self.cells
        ]


def split_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based rows of the odd (training) and even (validation) 1-based times."""
    rows = np.arange(n)
    return rows[0::2], rows[1::2]


def to_full_index(j: int) -> int:
    return 2 * j - 1


def validation_loss(series: RegressionSeries, change_points: Sequence[int], betas: Sequence[np.ndarray]) -> float:
    """Squared prediction error on even times, change points in full coordinates."""
    _, val = split_indices(series.n)
    t = val + 1
    seg = np.searchsorted(np.asarray(change_points, dtype=np.int64), t, side="right")
    B = np.stack(betas)[seg]
    resid = series.y[val] - np.einsum("ij,ij->i", series.X[val], B)
    return float(resid @ resid)


def _solve_lambda(train: RegressionSeries, lam: float, zetas, extra: dict):
    configs = [DetectorConfig(lam, z, **extra) for z in zetas]
    try:
        return dpdu_solve_many(train, configs), None
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return None, str(exc)


def cross_validate(series: RegressionSeries, grid: TuningGrid = TuningGrid(),
                   tol: float | None = None, max_sweeps: int | None = None,
                   threads: int = 1) -> CvResult:
    """Pick the grid cell with the smallest validation loss.

    Cells sharing a ``lam`` are solved in one pass; with ``threads > 1`` the
    ``lam`` groups run in a process pool. Failing cells get infinite loss.
    Ties go to the smaller ``lam`` and then the smaller ``zeta``.
    """
    if series.n < 4:
        raise ValueError(f"cross-validation needs n >= 4, got {series.n}")
    train_rows, _ = split_indices(series.n)
    train = series.subset(train_rows)
    extra = {}
    if tol is not None:
        extra["tol"] = tol
    if max_sweeps is not None:
        extra["max_sweeps"] = max_sweeps

    n_lam = len(grid.lambdas)
    args = ([train] * n_lam, grid.lambdas, [grid.zetas] * n_lam, [extra] * n_lam)
    if threads > 1 and n_lam > 1:
        with ProcessPoolExecutor(max_workers=min(threads, n_lam)) as pool:
            solved = list(pool.map(_solve_lambda, *args))
    else:
        solved = list(map(_solve_lambda, *args))

    cells: list[CvCell] = []
    for lam, (fits, err) in zip(grid.lambdas, solved):
        if fits is None:
            log.warning("cv cell lam=%g failed: %s", lam, err)
            cells.extend(CvCell(lam, z, math.inf, error=err) for z in grid.zetas)
            continue
        for z, fit in zip(grid.zetas, fits):
            cps = tuple(to_full_index(j) for j in fit.change_points)
            loss = validation_loss(series, cps, fit.segment_betas)
            cells.append(CvCell(lam, z, loss if math.isfinite(loss) else math.inf, cps, fit.segment_betas))

    if all(math.isinf(c.loss) for c in cells):
        raise RuntimeError("every cross-validation cell failed")
    best = min(cells, key=lambda c: (c.loss, c.lam, c.zeta))
    return CvResult(best.lam, best.zeta, cells)
