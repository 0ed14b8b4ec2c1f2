"""Confidence intervals for refined change points.

For change point ``k`` with flanking segment fits ``b_prev`` and ``b_next``:

* jump size ``kappa = |b_next - b_prev|_2``;
* long-run variance from block differences of
  ``Z_t = (y_t - X_t'b_prev + y_t - X_t'b_next) X_t'(b_next - b_prev)`` over
  the refinement window, split into ``2R`` blocks of ``S`` rows,
  ``sigma2 = (R kappa^2)^{-1} sum_r (2S)^{-1} (sum_{block 2r-1} Z - sum_{block 2r} Z)^2``;
* drift ``varpi = (n kappa^2)^{-1} sum_t ((b_next - b_prev)'X_t)^2``;
* Monte-Carlo draws of ``argmin_r {varpi |r| + sigma W(r)}`` for a two-sided
  Gaussian random walk ``W`` on the grid ``i / grid_n``, whose empirical
  quantiles scaled by ``kappa^-2`` give the interval around ``eta_tilde``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import RegressionSeries
from .dpdu import DetectionResult
from .refine import RefinedChangePoints, RefinementWindow, refinement_windows

log = logging.getLogger(__name__)

_MAX_GRID = 50_000_000


class DegenerateJump(ValueError):
    """Raised when an estimator needs a nonzero jump size and gets zero."""


@dataclass(frozen=True)
class LrvConfig:
    """Number of block pairs ``R``; ``None`` selects ``floor(max_k (e_k - s_k) ** 0.6)``."""

    R: int | None = None
    per_k: dict[int, int] = field(default_factory=dict)

    def resolve(self, windows: Sequence[RefinementWindow], k: int) -> int:
        if k in self.per_k:
            return self.per_k[k]
        if self.R is not None:
            return self.R
        return auto_blocks(windows)


@dataclass(frozen=True)
class CiSimConfig:
    """Monte-Carlo settings; ``M`` and ``grid_n`` default to the sample size."""

    B: int = 1000
    M: float | None = None
    grid_n: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.M is not None and not self.M > 0:
            raise ValueError("M must be positive")
        if self.grid_n is not None and self.grid_n < 1:
            raise ValueError("grid_n must be >= 1")

    def for_sample(self, n: int) -> "CiSimConfig":
        return CiSimConfig(self.B, self.M if self.M is not None else float(n),
                           self.grid_n if self.grid_n is not None else n, self.seed)


@dataclass
class InferenceResult:
    k: int
    eta_tilde: int
    kappa_hat: float
    sigma2_hat: float
    varpi_hat: float
    R: int
    seed_key: tuple[int, ...]
    intervals: dict[float, tuple[int, int]] = field(default_factory=dict)
    quantiles: dict[float, tuple[float, float]] = field(default_factory=dict)


def jump_size(beta_prev, beta_next) -> float:
    beta_prev = np.asarray(beta_prev, dtype=float)
    beta_next = np.asarray(beta_next, dtype=float)
    if beta_prev.shape != beta_next.shape:
        raise ValueError(f"length mismatch: {beta_prev.shape} vs {beta_next.shape}")
    return float(np.linalg.norm(beta_next - beta_prev))


def auto_blocks(windows: Sequence[RefinementWindow]) -> int:
    return max(1, math.floor(max(w.length for w in windows) ** 0.6))


def block_sum_of_squares(z: np.ndarray, R: int, span: float | None = None) -> tuple[float, int]:
    """``R^{-1} sum_r D_r^2`` over ``2R`` consecutive blocks from the start of ``z``.

    Block width is ``S = floor(span / (2R))`` with ``span`` defaulting to
    ``len(z)``. Returns the estimate and ``S``.
    """
    z = np.asarray(z, dtype=float)
    if R < 1:
        raise ValueError("R must be >= 1")
    span = len(z) if span is None else span
    S = math.floor(span / (2 * R))
    if S < 1:
        raise ValueError(f"window of length {span} too short for R={R} block pairs")
    if 2 * R * S > len(z):
        raise ValueError("blocks overrun the sequence")
    sums = z[: 2 * R * S].reshape(2 * R, S).sum(axis=1)
    D = (sums[0::2] - sums[1::2]) / math.sqrt(2 * S)
    return float(np.mean(D * D)), S


def score_sequence(series: RegressionSeries, window: RefinementWindow, beta_prev, beta_next) -> np.ndarray:
    """``Z_t`` over the integer rows of ``window``."""
    rows = window.rows
    X = series.X[rows.start - 1 : rows.stop - 1]
    y = series.y[rows.start - 1 : rows.stop - 1]
    delta = np.asarray(beta_next) - np.asarray(beta_prev)
    xd = X @ delta
    return ((y - X @ beta_prev) + (y - X @ beta_next)) * xd


def lrv_estimate(series: RegressionSeries, window: RefinementWindow, beta_prev, beta_next,
                 kappa_hat: float, R: int) -> float:
    """Block long-run variance of ``Z_t / kappa_hat`` on the refinement window."""
    if kappa_hat <= 0:
        raise DegenerateJump("degenerate jump: kappa_hat = 0")
    z = score_sequence(series, window, beta_prev, beta_next)
    ss, _ = block_sum_of_squares(z, R, span=window.length)
    return ss / kappa_hat**2


def drift_estimate(series: RegressionSeries, beta_prev, beta_next, kappa_hat: float) -> float:
    if kappa_hat <= 0:
        raise DegenerateJump("degenerate jump: kappa_hat = 0")
    xd = series.X @ (np.asarray(beta_next) - np.asarray(beta_prev))
    return float(xd @ xd / (series.n * kappa_hat**2))


def _argmin_index(obj_neg: np.ndarray, obj_pos: np.ndarray) -> int:
    """Signed grid index of the minimum of ``{0 at i=0, obj_neg[i-1] at -i, obj_pos[i-1] at +i}``.

    Ties go to the smallest ``|i|`` and then the negative side.
    """
    K = obj_neg.shape[0]
    merged = np.empty(2 * K + 1)
    merged[0] = 0.0
    merged[1::2] = obj_neg
    merged[2::2] = obj_pos
    j = int(np.argmin(merged))
    if j == 0:
        return 0
    return -((j + 1) // 2) if j % 2 else j // 2


def simulate_argmin(varpi: float, sigma: float, config: CiSimConfig, *stream: int) -> np.ndarray:
    """``B`` draws of ``argmin_{|r| < M} {varpi |r| + sigma W(r)}`` on the grid ``i / grid_n``.

    Replicate ``b`` uses its own stream ``SeedSequence(seed, spawn_key=(*stream, b))``.
    """
    if not varpi > 0:
        raise ValueError(f"drift must be positive, got {varpi}")
    if sigma < 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be finite and nonnegative, got {sigma}")
    if config.M is None or config.grid_n is None:
        raise ValueError("M and grid_n must be resolved (see CiSimConfig.for_sample)")
    g = config.grid_n
    # grid points strictly inside (-M, M)
    K = math.ceil(g * config.M) - 1
    if K > _MAX_GRID:
        raise OverflowError(f"grid of {2 * K + 1} points exceeds the limit")
    if sigma == 0.0 or K <= 0:
        return np.zeros(config.B)
    drift = varpi * np.arange(1, K + 1) / g
    scale = sigma / math.sqrt(g)
    out = np.empty(config.B)
    root = np.random.SeedSequence(config.seed, spawn_key=tuple(stream))
    for b, child in enumerate(root.spawn(config.B)):
        rng = np.random.Generator(np.random.PCG64(child))
        z = rng.standard_normal(2 * K)
        # z[:K] are z_{-1}, z_{-2}, ...; z[K:] are z_1, z_2, ...
        neg = drift + scale * np.cumsum(z[:K])
        pos = drift + scale * np.cumsum(z[K:])
        out[b] = _argmin_index(neg, pos) / g
    return out


def empirical_quantile(samples: np.ndarray, q: float) -> float:
    """Order statistic number ``ceil(B q)`` (1-based, at least 1)."""
    x = np.sort(np.asarray(samples, dtype=float))
    idx = max(1, math.ceil(len(x) * q - 1e-9))
    return float(x[min(idx, len(x)) - 1])


def confidence_interval(eta_tilde: int, kappa_hat: float, u_samples, alpha: float) -> tuple[int, int]:
    """Integer ``(1 - alpha)`` interval: floor of the lower end, ceiling of the upper."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    u = np.asarray(u_samples, dtype=float)
    if u.size == 0:
        raise ValueError("no Monte-Carlo samples")
    if kappa_hat == 0:
        return int(eta_tilde), int(eta_tilde)
    k2 = kappa_hat**2
    lo = math.floor(eta_tilde + empirical_quantile(u, alpha / 2) / k2)
    hi = math.ceil(eta_tilde + empirical_quantile(u, 1 - alpha / 2) / k2)
    return lo, hi


def infer_all(series: RegressionSeries, prelim: DetectionResult, refined: RefinedChangePoints,
              alphas: Sequence[float] = (0.05,), lrv: LrvConfig = LrvConfig(),
              sim: CiSimConfig = CiSimConfig()) -> list[InferenceResult]:
    """Jump size, long-run variance, drift and intervals for every change point.

    Change point ``k`` draws its Monte-Carlo replicates from streams keyed by
    ``(k,)`` under ``sim.seed``, so results are reproducible per seed.
    """
    if prelim.k_hat == 0:
        return []
    n = series.n
    sim = sim.for_sample(n)
    windows = refinement_windows(prelim.change_points, n)
    results = []
    for w, eta in zip(windows, refined.eta_tilde):
        k = w.k
        b_prev, b_next = prelim.segment_betas[k - 1], prelim.segment_betas[k]
        kappa = jump_size(b_prev, b_next)
        R = lrv.resolve(windows, k)
        res = InferenceResult(k, int(eta), kappa, math.nan, math.nan, R, (k,))
        if kappa == 0:
            warnings.warn(f"change point {k}: zero estimated jump, interval is degenerate", stacklevel=2)
            for a in alphas:
                res.intervals[a] = (int(eta), int(eta))
                res.quantiles[a] = (0.0, 0.0)
            results.append(res)
            continue
        if math.floor(w.length / (2 * R)) < 1:
            # auto R from the widest window can be too large for a short one
            R_fallback = max(1, math.floor(w.length / 2))
            log.warning("change point %d: window %.1f too short for R=%d, using R=%d", k, w.length, R, R_fallback)
            R = res.R = R_fallback
            if w.length < 2:
                warnings.warn(f"change point {k}: window too short for a variance estimate", stacklevel=2)
                for a in alphas:
                    res.intervals[a] = (int(eta), int(eta))
                    res.quantiles[a] = (0.0, 0.0)
                results.append(res)
                continue
        res.sigma2_hat = lrv_estimate(series, w, b_prev, b_next, kappa, R)
        res.varpi_hat = drift_estimate(series, b_prev, b_next, kappa)
        u = simulate_argmin(res.varpi_hat, math.sqrt(res.sigma2_hat), sim, k)
        for a in alphas:
            res.intervals[a] = confidence_interval(eta, kappa, u, a)
            res.quantiles[a] = (empirical_quantile(u, a / 2), empirical_quantile(u, 1 - a / 2))
        results.append(res)
    return results
