"""Synthetic regression series with piecewise-constant sparse coefficients.

Covariates follow a stationary Gaussian AR(1) with unit marginal variance,
``X_t = a X_{t-1} + sqrt(1 - a^2) e_t``, started from ``N(0, I_p)``. Noise is
the normalised MA(1) ``eps_t = (e'_t + b e'_{t-1}) / (2 sqrt(1 + b^2))``, so
``Var(eps_t) = 1/4``. Coefficients are ``(-1)^k beta_0`` on segment ``k`` with
``beta_0`` holding ``kappa / (2 sqrt(s))`` in its first ``s`` entries, giving
jump size exactly ``kappa`` at every change point.

Random numbers come from numpy's ``PCG64`` bit generator seeded through
``SeedSequence``; repetition ``r`` of a run with seed ``s`` uses the stream
``SeedSequence(s, spawn_key=(r,))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import GroundTruth, RegressionSeries

RNG_ALGORITHM = "numpy.PCG64/SeedSequence"

SCENARIO_FRACTIONS = {
    1: (0.5,),
    2: (0.5,),
    3: (0.25, 0.625),
}


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    p: int
    kappa: float = 2.0
    s: int = 5
    change_fractions: tuple[float, ...] = (0.5,)
    ar_coef: float = 0.3
    ma_coef: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        fr = tuple(float(f) for f in self.change_fractions)
        object.__setattr__(self, "change_fractions", fr)
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if not 1 <= self.s <= self.p:
            raise ValueError(f"sparsity s={self.s} must lie in 1..p={self.p}")
        if any(not 0 < f < 1 for f in fr) or any(b <= a for a, b in zip(fr, fr[1:])):
            raise ValueError("change fractions must be strictly increasing inside (0, 1)")
        if not abs(self.ar_coef) < 1:
            raise ValueError("AR coefficient must lie in (-1, 1)")
        cps = self.change_points
        if any(b <= a for a, b in zip(cps, cps[1:])) or (cps and (cps[0] < 2 or cps[-1] > self.n)):
            raise ValueError(f"n={self.n} too small for change fractions {fr}")

    @classmethod
    def scenario(cls, number: int, n: int, p: int, kappa: float = 2.0, seed: int = 0, **kw) -> "ScenarioConfig":
        return cls(n=n, p=p, kappa=kappa, change_fractions=SCENARIO_FRACTIONS[number], seed=seed, **kw)

    @property
    def change_points(self) -> tuple[int, ...]:
        return tuple(int(math.floor(self.n * f + 0.5)) for f in self.change_fractions)

    @property
    def noise_scale(self) -> float:
        return 1.0 / (2.0 * math.sqrt(1.0 + self.ma_coef**2))

    def base_beta(self) -> np.ndarray:
        beta = np.zeros(self.p)
        beta[: self.s] = self.kappa / (2.0 * math.sqrt(self.s))
        return beta


def generate(config: ScenarioConfig, rep: int | None = None) -> tuple[RegressionSeries, GroundTruth]:
    """Draw one series and its ground truth.

    ``rep`` selects an independent stream derived from ``config.seed``.
    """
    rng = make_rng(config.seed) if rep is None else make_rng(config.seed, rep)
    n, p, a = config.n, config.p, config.ar_coef

    e = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[0] = e[0]
    scale = math.sqrt(1.0 - a * a)
    for t in range(1, n):
        X[t] = a * X[t - 1] + scale * e[t]

    e2 = rng.standard_normal(n + 1)
    eps = (e2[1:] + config.ma_coef * e2[:-1]) * config.noise_scale

    cps = config.change_points
    beta0 = config.base_beta()
    betas = tuple(((-1) ** k) * beta0 for k in range(len(cps) + 1))
    seg = np.searchsorted(np.asarray(cps), np.arange(1, n + 1), side="right")
    B = np.stack(betas)[seg]
    y = np.einsum("ij,ij->i", X, B) + eps
    return RegressionSeries(y, X), GroundTruth(cps, betas, n)


def hausdorff(estimated: Sequence[int], truth: GroundTruth | Sequence[int], n: int) -> float:
    """Scaled Hausdorff distance between boundary-augmented change-point sets."""
    true_cps = truth.change_points if isinstance(truth, GroundTruth) else tuple(truth)
    a = np.array([1, *estimated, n + 1], dtype=float)
    b = np.array([1, *true_cps, n + 1], dtype=float)
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()) / n)


@dataclass
class RunMetrics:
    """Per-repetition evaluation record."""

    k_hat: int
    k_true: int
    d_pre: float
    d_fin: float
    # alpha -> per-change-point coverage indicators / widths; filled only when k_hat == k_true
    cover: dict[float, list[int]] = field(default_factory=dict)
    width: dict[float, list[int]] = field(default_factory=dict)

    @property
    def under(self) -> bool:
        return self.k_hat < self.k_true

    @property
    def over(self) -> bool:
        return self.k_hat > self.k_true


def score_run(prelim: Sequence[int], refined: Sequence[int], intervals, truth: GroundTruth,
              alphas: Sequence[float] = ()) -> RunMetrics:
    """Evaluate one repetition.

    ``intervals`` maps ``alpha`` to a list of ``(low, high)`` integer intervals,
    one per estimated change point (it may be empty when nothing was found).
    """
    n = truth.n
    rec = RunMetrics(
        k_hat=len(prelim),
        k_true=truth.K,
        d_pre=hausdorff(prelim, truth, n),
        d_fin=hausdorff(refined, truth, n),
    )
    if rec.k_hat == rec.k_true:
        for alpha in alphas:
            ivs = intervals[alpha]
            rec.cover[alpha] = [int(lo <= eta <= hi) for (lo, hi), eta in zip(ivs, truth.change_points)]
            rec.width[alpha] = [int(hi - lo) for lo, hi in ivs]
    return rec


def aggregate(records: Sequence[RunMetrics]) -> dict:
    """Table-style summary: under/over rates, mean (sd) distances, coverage and width.

    Coverage and width average over repetitions with ``k_hat == k_true`` only.
    """
    recs = list(records)
    out: dict = {
        "reps": len(recs),
        "under": float(np.mean([r.under for r in recs])),
        "over": float(np.mean([r.over for r in recs])),
        "exact": float(np.mean([r.k_hat == r.k_true for r in recs])),
        "d_pre_mean": float(np.mean([r.d_pre for r in recs])),
        "d_pre_sd": float(np.std([r.d_pre for r in recs], ddof=1)) if len(recs) > 1 else 0.0,
        "d_fin_mean": float(np.mean([r.d_fin for r in recs])),
        "d_fin_sd": float(np.std([r.d_fin for r in recs], ddof=1)) if len(recs) > 1 else 0.0,
    }
    good = [r for r in recs if r.k_hat == r.k_true]
    alphas = sorted({a for r in good for a in r.cover})
    inference = {}
    for alpha in alphas:
        K = good[0].k_true
        per_k = []
        for k in range(K):
            cov = [r.cover[alpha][k] for r in good]
            wid = [r.width[alpha][k] for r in good]
            per_k.append({
                "cover": float(np.mean(cov)),
                "width_mean": float(np.mean(wid)),
                "width_sd": float(np.std(wid, ddof=1)) if len(wid) > 1 else 0.0,
                "count": len(cov),
            })
        inference[str(alpha)] = per_k
    out["inference"] = inference
    return out
