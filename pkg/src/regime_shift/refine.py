"""Local refinement of preliminary change points.

Around each preliminary estimate the two-segment squared loss

    Q_k(eta) = sum_{t=s_k}^{eta-1} (y_t - X_t' b_{k-1})^2 + sum_{t=eta}^{e_k-1} (y_t - X_t' b_k)^2

is minimised over integers ``s_k < eta < e_k``, where the window is
``s_k = 0.9 eta_{k-1} + 0.1 eta_k`` and ``e_k = 0.1 eta_k + 0.9 eta_{k+1}``
with ``eta_0 = 1`` and ``eta_{K+1} = n + 1``. The coefficients are the
preliminary segment fits; they are not re-estimated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import RegressionSeries
from .dpdu import DetectionResult


@dataclass(frozen=True)
class RefinementWindow:
    """Window ``(s, e)`` held exactly as integer multiples of 1/10."""

    k: int
    s10: int
    e10: int

    @property
    def s(self) -> float:
        return self.s10 / 10

    @property
    def e(self) -> float:
        return self.e10 / 10

    @property
    def candidates(self) -> range:
        """Integers strictly inside ``(s, e)``."""
        return range(self.s10 // 10 + 1, (self.e10 - 1) // 10 + 1)

    @property
    def rows(self) -> range:
        """Integer times ``t`` with ``s <= t < e``; the summation range of ``Q``."""
        return range(-(-self.s10 // 10), (self.e10 - 1) // 10 + 1)

    @property
    def length(self) -> float:
        return (self.e10 - self.s10) / 10


@dataclass
class RefinedChangePoints:
    eta_tilde: tuple[int, ...]
    q_profile: list[dict[int, float]] = field(default_factory=list, repr=False)


def refinement_windows(change_points, n: int) -> list[RefinementWindow]:
    """Windows ``(s_k, e_k)`` for preliminary change points in ``{2..n}``."""
    if isinstance(change_points, DetectionResult):
        change_points = change_points.change_points
    cps = tuple(change_points)
    if not cps:
        raise ValueError("no preliminary change points to refine")
    if any(not 2 <= c <= n for c in cps):
        raise ValueError(f"change points must lie in 2..{n}")
    b = (1, *cps, n + 1)
    return [
        RefinementWindow(k, 9 * b[k - 1] + b[k], b[k] + 9 * b[k + 1])
        for k in range(1, len(cps) + 1)
    ]


def q_profile(series: RegressionSeries, window: RefinementWindow, beta_left, beta_right) -> dict[int, float]:
    """``Q(eta)`` at every candidate, by one telescoping pass over the window."""
    cand = window.candidates
    if len(cand) == 0:
        raise ValueError(f"window ({window.s}, {window.e}) has no integer candidate")
    rows = window.rows
    X = series.X[rows.start - 1 : rows.stop - 1]
    y = series.y[rows.start - 1 : rows.stop - 1]
    r_left = (y - X @ beta_left) ** 2
    r_right = (y - X @ beta_right) ** 2
    # Q at the first candidate, then Q(eta+1) = Q(eta) + r_left[eta] - r_right[eta]
    first = cand.start - rows.start
    q0 = r_left[:first].sum() + r_right[first:].sum()
    steps = r_left[first : first + len(cand) - 1] - r_right[first : first + len(cand) - 1]
    q = np.concatenate(([q0], q0 + np.cumsum(steps)))
    return dict(zip(cand, q.tolist()))


def refine(series: RegressionSeries, prelim: DetectionResult,
           windows: list[RefinementWindow] | None = None) -> RefinedChangePoints:
    """Minimise ``Q_k`` in each window; ties go to the smallest ``eta``."""
    if not prelim.change_points:
        return RefinedChangePoints(())
    if windows is None:
        windows = refinement_windows(prelim.change_points, series.n)
    if len(windows) != prelim.k_hat:
        raise ValueError("one window per preliminary change point is required")
    etas, profiles = [], []
    for w in windows:
        prof = q_profile(series, w, prelim.segment_betas[w.k - 1], prelim.segment_betas[w.k])
        best = min(prof.items(), key=lambda kv: (kv[1], kv[0]))[0]
        etas.append(best)
        profiles.append(prof)
    return RefinedChangePoints(tuple(etas), profiles)
