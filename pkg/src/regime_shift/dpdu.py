"""Penalised optimal partitioning with Lasso-fitted interval losses.

``dpdu_solve`` runs the dynamic-programming recursion over right endpoints
``r = 2..n+1`` and sweeps the left endpoint backwards, updating one Gram /
cross-moment buffer by a rank-one term per step. ``dp_reference_solve`` is the
textbook recursion that rebuilds those moments from scratch for every
interval; it exists as a timing baseline and an equivalence check.
``exhaustive_solve`` enumerates every contiguous partition and is only
practical for ``n <= 14`` or so.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .data import IntervalMoments, RegressionSeries
from .lasso import DEFAULT_MAX_SWEEPS, DEFAULT_TOL, LassoSettings, _cd_solve, lasso_fit


@dataclass(frozen=True)
class DetectorConfig:
    """Tuning for the preliminary detector.

    ``zeta`` is the per-segment penalty; ``zeta_minlen`` is the shortest
    interval that gets a Lasso fit (shorter ones contribute zero loss) and
    defaults to ``zeta``.
    """

    lam: float
    zeta: float
    zeta_minlen: float | None = None
    tol: float = DEFAULT_TOL
    max_sweeps: int = DEFAULT_MAX_SWEEPS

    def __post_init__(self) -> None:
        if self.zeta_minlen is None:
            object.__setattr__(self, "zeta_minlen", self.zeta)
        if not (self.lam > 0 and self.zeta > 0 and self.zeta_minlen > 0):
            raise ValueError("lam, zeta and zeta_minlen must be positive")

    @property
    def lasso(self) -> LassoSettings:
        return LassoSettings(self.lam, self.tol, self.max_sweeps)


@dataclass
class DetectionResult:
    change_points: tuple[int, ...]
    segment_betas: list[np.ndarray]
    objective: float  # sum of interval losses + zeta * (number of segments)
    dp_values: np.ndarray  # B_1..B_{n+1}
    pointers: np.ndarray  # p_2..p_{n+1} at positions 1..n, -1 at position 0
    nonconverged: int = 0
    config: DetectorConfig | None = field(default=None, repr=False)

    @property
    def k_hat(self) -> int:
        return len(self.change_points)

    def boundaries(self, n: int) -> tuple[int, ...]:
        return (1, *self.change_points, n + 1)


@njit(cache=True)
def _interval_loss(gram, cross, beta):
    # -2 cross' beta + beta' gram beta, skipping zero coordinates
    p = cross.shape[0]
    quad = 0.0
    lin = 0.0
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            s = 0.0
            for k in range(p):
                s += gram[j, k] * beta[k]
            quad += bj * s
            lin += cross[j] * bj
    return quad - 2.0 * lin


@njit(cache=True)
def _add_row(gram, cross, x, yv):
    p = x.shape[0]
    for i in range(p):
        xi = x[i]
        if xi != 0.0:
            for j in range(i, p):
                v = xi * x[j]
                gram[i, j] += v
                if j != i:
                    gram[j, i] += v
        cross[i] += yv * xi


@njit(cache=True)
def _dp_kernel(X, y, lam, zetas, minlens, tol_rel, max_sweeps, incremental,
               gram, cross, beta, grad, work, idx, trace, B, pointer):
    """Fill ``B[i, 1..n+1]`` and ``pointer[i, 2..n+1]`` for each penalty ``zetas[i]``.

    Every configuration shares one Lasso fit per interval, so several
    ``(zeta, zeta_minlen)`` pairs with the same ``lam`` cost one pass. The
    warm-start chain at each ``r`` starts cold at the shortest fitted interval.
    All buffers are supplied by the caller; the kernel allocates nothing.
    Returns the number of non-converged Lasso fits.
    """
    n = X.shape[0]
    p = X.shape[1]
    nz = zetas.shape[0]
    fit_from = minlens[0]
    for i in range(nz):
        if minlens[i] < fit_from:
            fit_from = minlens[i]
        for t in range(B.shape[1]):
            B[i, t] = np.inf
            pointer[i, t] = -1
        B[i, 1] = -zetas[i]
    nonconv = 0
    for r in range(2, n + 2):
        for i in range(p):
            cross[i] = 0.0
            for j in range(p):
                gram[i, j] = 0.0
        warm = False
        for l in range(r - 1, 0, -1):
            if incremental:
                _add_row(gram, cross, X[l - 1], y[l - 1])
            else:
                for i in range(p):
                    cross[i] = 0.0
                    for j in range(p):
                        gram[i, j] = 0.0
                for t in range(r - 1, l - 1, -1):
                    _add_row(gram, cross, X[t - 1], y[t - 1])
            m = r - l
            g = 0.0
            if m >= fit_from:
                if not warm:
                    for j in range(p):
                        beta[j] = 0.0
                    warm = True
                sweeps, status = _cd_solve(gram, cross, float(m), lam, beta, grad, work, idx,
                                           tol_rel, max_sweeps, trace)
                if status != 0:
                    nonconv += 1
                g = _interval_loss(gram, cross, beta)
            for i in range(nz):
                b = B[i, l] + zetas[i]
                if m >= minlens[i]:
                    b += g
                if b < B[i, r]:
                    B[i, r] = b
                    pointer[i, r] = l
    return nonconv


@dataclass
class _Workspace:
    """Everything the DP loop touches besides the input: one moments buffer
    (``gram``, ``cross``), the Lasso iterate, its gradient and the p x (p+1)
    factorisation scratch, and the length-``n+2`` value and pointer arrays."""

    gram: np.ndarray
    cross: np.ndarray
    beta: np.ndarray
    grad: np.ndarray
    work: np.ndarray
    idx: np.ndarray
    trace: np.ndarray
    B: np.ndarray
    pointer: np.ndarray

    @classmethod
    def allocate(cls, n: int, p: int, k: int = 1) -> "_Workspace":
        return cls(
            gram=np.zeros((p, p)),
            cross=np.zeros(p),
            beta=np.zeros(p),
            grad=np.zeros(p),
            work=np.zeros((p, p + 1)),
            idx=np.zeros(p, dtype=np.int64),
            trace=np.empty(0),
            B=np.empty((k, n + 2)),
            pointer=np.empty((k, n + 2), dtype=np.int64),
        )


def backtrack(pointer: np.ndarray, n: int) -> tuple[int, ...]:
    """Change points from the pointer chain ending at position ``n + 1``."""
    cps = []
    k = n + 1
    steps = 0
    while k > 1:
        h = int(pointer[k])
        if h < 1 or h >= k:
            raise RuntimeError(f"broken pointer chain at {k}")
        if h > 1:
            cps.append(h)
        k = h
        steps += 1
        if steps > n:
            raise RuntimeError("pointer chain did not terminate")
    return tuple(sorted(cps))


def fit_segments(series: RegressionSeries, change_points, settings: LassoSettings) -> list[np.ndarray]:
    """Lasso refit on each segment ``[eta_k, eta_{k+1})`` of the partition."""
    bounds = (1, *change_points, series.n + 1)
    return [
        lasso_fit(IntervalMoments.from_rows(series, a, b), settings).beta
        for a, b in zip(bounds, bounds[1:])
    ]


def _run(series: RegressionSeries, configs, incremental: bool) -> list[DetectionResult]:
    n, p = series.n, series.p
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    first = configs[0]
    if any((c.lam, c.tol, c.max_sweeps) != (first.lam, first.tol, first.max_sweeps) for c in configs):
        raise ValueError("batched configurations must share lam, tol and max_sweeps")
    ws = _Workspace.allocate(n, p, len(configs))
    nonconv = _dp_kernel(
        series.X, series.y, float(first.lam),
        np.array([c.zeta for c in configs], dtype=np.float64),
        np.array([c.zeta_minlen for c in configs], dtype=np.float64),
        float(first.tol), int(first.max_sweeps), incremental,
        ws.gram, ws.cross, ws.beta, ws.grad, ws.work, ws.idx, ws.trace, ws.B, ws.pointer,
    )
    results = []
    for i, config in enumerate(configs):
        cps = backtrack(ws.pointer[i], n)
        results.append(DetectionResult(
            change_points=cps,
            segment_betas=fit_segments(series, cps, config.lasso),
            objective=float(ws.B[i, n + 1] + config.zeta),
            dp_values=ws.B[i, 1:].copy(),
            pointers=ws.pointer[i, 1:].copy(),
            nonconverged=int(nonconv),
            config=config,
        ))
    return results


def dpdu_solve_many(series: RegressionSeries, configs) -> list[DetectionResult]:
    """Run :func:`dpdu_solve` for several penalties sharing one ``lam`` in a single pass."""
    return _run(series, list(configs), incremental=True)


def dpdu_solve(series: RegressionSeries, config: DetectorConfig) -> DetectionResult:
    """Preliminary change points by DP with incrementally updated moments.

    Within each right endpoint the left endpoint runs ``r-1, ..., 1`` and each
    Lasso fit is warm-started from the previous (one row shorter) interval.
    Ties keep the first candidate seen, i.e. the largest ``l``.
    """
    return _run(series, [config], incremental=True)[0]


def dp_reference_solve(series: RegressionSeries, config: DetectorConfig) -> DetectionResult:
    """Same recursion, but moments are recomputed for every ``(l, r)``.

    Rows are summed in the same order as :func:`dpdu_solve`, so both return
    bit-identical results.
    """
    return _run(series, [config], incremental=False)[0]


def goodness(moments: IntervalMoments, config: DetectorConfig) -> float:
    """Interval loss: 0 below ``zeta_minlen`` rows, else ``-2 V'b + b'Mb`` at the Lasso fit."""
    if moments.count < config.zeta_minlen:
        return 0.0
    fit = lasso_fit(moments, config.lasso)
    return float(_interval_loss(np.ascontiguousarray(moments.gram), np.ascontiguousarray(moments.cross), fit.beta))


def partition_objective(losses: dict[tuple[int, int], float], bounds, zeta: float) -> float:
    return sum(losses[(a, b)] for a, b in zip(bounds, bounds[1:])) + zeta * (len(bounds) - 1)


def exhaustive_solve(series: RegressionSeries, config: DetectorConfig):
    """Brute-force minimum over all ``2^(n-1)`` contiguous partitions.

    Returns ``(objective, change_points, losses)`` where ``losses`` maps each
    1-based ``(start, stop)`` interval to its loss.
    """
    n = series.n
    if n > 16:
        raise ValueError("exhaustive search is limited to n <= 16")
    losses = {
        (a, b): goodness(IntervalMoments.from_rows(series, a, b), config)
        for a in range(1, n + 1)
        for b in range(a + 1, n + 2)
    }
    best, best_cps = math.inf, ()
    for k in range(n):
        for cps in itertools.combinations(range(2, n + 1), k):
            val = partition_objective(losses, (1, *cps, n + 1), config.zeta)
            if val < best:
                best, best_cps = val, cps
    return best, best_cps, losses
