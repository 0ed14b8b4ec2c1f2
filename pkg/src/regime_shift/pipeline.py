"""End-to-end detection, refinement and inference, plus the repetition harness."""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .data import RegressionSeries
from .dpdu import DetectionResult, DetectorConfig, dpdu_solve
from .inference import CiSimConfig, InferenceResult, LrvConfig, infer_all
from .refine import RefinedChangePoints, refine
from .simulate import RunMetrics, ScenarioConfig, generate, score_run
from .tuning import CvResult, TuningGrid, cross_validate


class StageError(RuntimeError):
    """A numerical failure, tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


NUMERICAL_ERRORS = (ArithmeticError, RuntimeError, np.linalg.LinAlgError)


@contextmanager
def stage(name: str, timings: dict[str, float] | None = None) -> Iterator[None]:
    """Time a block and re-raise numerical failures as :class:`StageError`.

    ``ValueError`` (bad input) passes through untouched.
    """
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except NUMERICAL_ERRORS as exc:
        raise StageError(name, str(exc)) from exc
    finally:
        if timings is not None:
            timings[name] = time.perf_counter() - t0


@dataclass
class PipelineResult:
    config: DetectorConfig
    detection: DetectionResult
    refined: RefinedChangePoints
    inference: list[InferenceResult]
    cv: CvResult | None = None
    timings: dict[str, float] = field(default_factory=dict)


def run_pipeline(series: RegressionSeries, lam: float | None = None, zeta: float | None = None,
                 grid: TuningGrid | None = None, alphas: Sequence[float] = (0.05,),
                 lrv: LrvConfig = LrvConfig(), sim: CiSimConfig = CiSimConfig(),
                 infer: bool = True, threads: int = 1) -> PipelineResult:
    """Detect, refine and (optionally) build intervals.

    Without ``lam``/``zeta`` the pair is chosen by cross-validation over ``grid``.
    """
    timings: dict[str, float] = {}
    cv = None
    if lam is None or zeta is None:
        with stage("cv", timings):
            cv = cross_validate(series, grid or TuningGrid(), threads=threads)
        lam = cv.lam if lam is None else lam
        zeta = cv.zeta if zeta is None else zeta
    config = DetectorConfig(lam, zeta)

    with stage("detect", timings):
        det = dpdu_solve(series, config)
    with stage("refine", timings):
        ref = refine(series, det)
    inf: list[InferenceResult] = []
    if infer:
        with stage("infer", timings):
            inf = infer_all(series, det, ref, alphas, lrv, sim)
    return PipelineResult(config, det, ref, inf, cv, timings)


def default_threads() -> int:
    env = os.environ.get("REGIME_SHIFT_THREADS")
    if env:
        return max(1, int(env))
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


@dataclass(frozen=True)
class RepSpec:
    scenario: ScenarioConfig
    rep: int
    alphas: tuple[float, ...] = (0.01, 0.05)
    B: int = 1000
    lam: float | None = None
    zeta: float | None = None
    infer: bool = True


def run_rep(spec: RepSpec) -> RunMetrics:
    """One simulated repetition scored against its ground truth.

    The Monte-Carlo seed for the intervals is the repetition's data seed
    mixed with the repetition index, so every rep is independently reproducible.
    """
    series, truth = generate(spec.scenario, spec.rep)
    sim = CiSimConfig(B=spec.B, seed=spec.scenario.seed * 1_000_003 + spec.rep)
    res = run_pipeline(series, spec.lam, spec.zeta, alphas=spec.alphas, sim=sim, infer=spec.infer)
    intervals = {a: [r.intervals[a] for r in res.inference] for a in spec.alphas} if spec.infer else {}
    return score_run(res.detection.change_points, res.refined.eta_tilde, intervals, truth,
                     spec.alphas if spec.infer else ())


def run_reps(specs: Sequence[RepSpec], threads: int | None = None) -> list[RunMetrics]:
    """Evaluate repetitions, in a process pool when ``threads > 1``; order is preserved."""
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(specs) <= 1:
        return [run_rep(s) for s in specs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_rep, specs))
