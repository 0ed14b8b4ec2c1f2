"""Command-line front end: ``regime-shift {detect,refine,infer,simulate,cv,bench}``.

Exit status is 0 on success, 1 for bad input (unreadable file, malformed
CSV, invalid flag values) and 2 for a numerical failure, in which case the
failing stage is named on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DataError, RegressionSeries, load_csv, write_csv
from .dpdu import DetectionResult, DetectorConfig, dp_reference_solve, dpdu_solve, fit_segments
from .inference import CiSimConfig, LrvConfig, infer_all
from .pipeline import StageError, default_threads, run_pipeline, stage
from .refine import RefinedChangePoints, refine
from .report import RunReport, cv_dict, detection_dict, inference_dict, refinement_dict
from .simulate import SCENARIO_FRACTIONS, ScenarioConfig, generate
from .tuning import DEFAULT_LAMBDAS, DEFAULT_ZETAS, TuningGrid, cross_validate

log = logging.getLogger("regime_shift")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2


class InputError(Exception):
    """Bad flags or unusable input; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved here for numerical failures
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- arg types

def _int_list(text: str) -> list[int]:
    """``"1,2,5-8"`` -> ``[1, 2, 5, 6, 7, 8]``."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                a, b = part.split("-", 1)
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive(kind):
    def conv(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _alpha(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return v


# ---------------------------------------------------------------- shared options

def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("csv", type=Path, help="input CSV (one row per time point)")
    p.add_argument("--y-col", type=int, default=0, help="0-based response column (default 0)")
    p.add_argument("--x-cols", type=_int_list, default=None,
                   help="0-based covariate columns, e.g. '1-100' or '1,3,5' (default: all but --y-col)")
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto",
                   help="whether the first row is a header (default: detect)")
    p.add_argument("--intercept", action="store_true", help="append a constant covariate column")


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=_positive(int), default=None,
                   help="worker processes (default: $REGIME_SHIFT_THREADS, else available cores)")


def _add_inference_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=_alpha, action="append", default=None,
                   help="interval level; repeat for several (default 0.05)")
    p.add_argument("--seed", type=int, default=0, help="Monte-Carlo seed (default 0)")
    p.add_argument("--B", type=_positive(int), default=1000, help="Monte-Carlo draws (default 1000)")
    p.add_argument("--M-halfwidth", dest="M", type=_positive(float), default=None,
                   help="half-width of the simulated argmin range (default n)")
    p.add_argument("--grid-n", type=_positive(int), default=None,
                   help="grid points per unit of the simulated walk (default n)")
    p.add_argument("--R", type=_positive(int), default=None,
                   help="block pairs of the long-run variance estimator (default automatic)")


def _load(args) -> RegressionSeries:
    header = {"auto": None, "yes": True, "no": False}[args.header]
    return load_csv(args.csv, y_col=args.y_col, x_cols=args.x_cols, header=header,
                    add_intercept=args.intercept)


def _data_echo(args) -> dict:
    return {"csv": str(args.csv), "y_col": args.y_col, "x_cols": args.x_cols,
            "header": args.header, "intercept": args.intercept}


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_threads()


def _alphas(args) -> tuple[float, ...]:
    return tuple(sorted(set(args.alpha))) if args.alpha else (0.05,)


def _sim_config(args) -> CiSimConfig:
    return CiSimConfig(B=args.B, M=args.M, grid_n=args.grid_n, seed=args.seed)


def _inference_echo(args, n: int) -> dict:
    sim = _sim_config(args).for_sample(n)
    return {"alpha": list(_alphas(args)), "seed": args.seed, "B": sim.B,
            "M_halfwidth": sim.M, "grid_n": sim.grid_n, "R": args.R}


def _emit(report: RunReport, out: Path | None) -> None:
    if out is not None:
        try:
            report.write(out)
        except OSError as exc:
            raise InputError(f"cannot write {out}: {exc.strerror or exc}") from exc


def _summary(det: DetectionResult | None, ref: RefinedChangePoints | None, inference: list[dict]) -> str:
    lines = []
    if det is not None:
        cfg = det.config
        lines.append(f"lambda={cfg.lam:g} zeta={cfg.zeta:g}  K_hat={det.k_hat}  "
                     f"preliminary={list(det.change_points)}")
    if ref is not None and ref.eta_tilde:
        lines.append(f"refined={list(ref.eta_tilde)}")
    for row in inference:
        ivs = "  ".join(f"{1 - float(a):.0%}: [{lo}, {hi}]" for a, (lo, hi) in row["intervals"].items())
        kappa = row["kappa_hat"]
        lines.append(f"  k={row['k']} eta={row['eta_tilde']} kappa_hat="
                     f"{kappa if kappa is None else format(kappa, '.4g')}  {ivs}")
    return "\n".join(lines)


# ---------------------------------------------------------------- subcommands

def cmd_detect(args) -> RunReport:
    if not args.cv and (args.lam is None or args.zeta is None):
        raise InputError("give both --lambda and --zeta, or --cv")
    series = _load(args)
    alphas = _alphas(args)
    grid = TuningGrid(tuple(args.lambdas), tuple(args.zetas)) if args.cv else None
    res = run_pipeline(series, args.lam, args.zeta, grid=grid, alphas=alphas,
                       lrv=LrvConfig(R=args.R), sim=_sim_config(args), threads=_threads(args))
    inference = [inference_dict(r, args.seed) for r in res.inference]
    config = {
        "data": _data_echo(args), "n": series.n, "p": series.p,
        "lambda": args.lam, "zeta": args.zeta, "cv": bool(args.cv),
        "cv_grid": {"lambdas": list(grid.lambdas), "zetas": list(grid.zetas)} if grid else None,
        "selected": {"lambda": res.config.lam, "zeta": res.config.zeta},
        "lasso": {"tol": res.config.tol, "max_sweeps": res.config.max_sweeps},
        "inference": _inference_echo(args, series.n),
    }
    report = RunReport(
        "detect", config,
        detection=detection_dict(res.detection),
        refinement=refinement_dict(res.refined),
        inference=inference,
        cv=cv_dict(res.cv) if res.cv else None,
        timings=res.timings,
    )
    print(_summary(res.detection, res.refined, inference))
    return report


def _prior_detection(series: RegressionSeries, prior: RunReport, lam: float | None) -> DetectionResult:
    det = prior.detection
    if not det or "change_points" not in det:
        raise InputError("prior report has no detection section")
    lam = lam if lam is not None else det.get("lambda")
    zeta = det.get("zeta") or 1.0
    if lam is None:
        raise InputError("prior report does not record lambda; pass --lambda")
    cps = tuple(int(c) for c in det["change_points"])
    if any(not 2 <= c <= series.n for c in cps) or list(cps) != sorted(set(cps)):
        raise InputError(f"prior change points {list(cps)} do not fit a series of length {series.n}")
    config = DetectorConfig(float(lam), float(zeta))
    with stage("refit"):
        betas = fit_segments(series, cps, config.lasso)
    return DetectionResult(cps, betas, math.nan, np.empty(0), np.empty(0, dtype=np.int64), 0, config)


def cmd_refine(args) -> RunReport:
    series = _load(args)
    prior = RunReport.load(args.report)
    timings: dict[str, float] = {}
    det = _prior_detection(series, prior, args.lam)
    with stage("refine", timings):
        ref = refine(series, det)
    report = RunReport(
        "refine",
        {"data": _data_echo(args), "n": series.n, "p": series.p, "report": str(args.report),
         "lambda": det.config.lam},
        detection={**detection_dict(det), "objective": None},
        refinement=refinement_dict(ref),
        timings=timings,
    )
    print(_summary(det, ref, []))
    return report


def cmd_infer(args) -> RunReport:
    series = _load(args)
    prior = RunReport.load(args.report)
    timings: dict[str, float] = {}
    det = _prior_detection(series, prior, args.lam)
    eta = (prior.refinement or {}).get("eta_tilde")
    if eta is None:
        with stage("refine", timings):
            ref = refine(series, det)
    else:
        if len(eta) != det.k_hat:
            raise InputError("prior refinement and detection disagree on the number of change points")
        ref = RefinedChangePoints(tuple(int(e) for e in eta))
    with stage("infer", timings):
        results = infer_all(series, det, ref, _alphas(args), LrvConfig(R=args.R), _sim_config(args))
    inference = [inference_dict(r, args.seed) for r in results]
    report = RunReport(
        "infer",
        {"data": _data_echo(args), "n": series.n, "p": series.p, "report": str(args.report),
         "lambda": det.config.lam, "inference": _inference_echo(args, series.n)},
        detection={**detection_dict(det), "objective": None},
        refinement=refinement_dict(ref),
        inference=inference,
        timings=timings,
    )
    print(_summary(None, ref, inference))
    return report


def cmd_cv(args) -> RunReport:
    series = _load(args)
    grid = TuningGrid(tuple(args.lambdas), tuple(args.zetas))
    timings: dict[str, float] = {}
    with stage("cv", timings):
        cv = cross_validate(series, grid, threads=_threads(args))
    print(f"{'lambda':>8} {'zeta':>8} {'loss':>14}  change points")
    for c in cv.cells:
        mark = " *" if (c.lam, c.zeta) == (cv.lam, cv.zeta) else ""
        print(f"{c.lam:8g} {c.zeta:8g} {c.loss:14.6g}  {list(c.change_points)}{mark}")
    print(f"selected lambda={cv.lam:g} zeta={cv.zeta:g}")
    return RunReport(
        "cv",
        {"data": _data_echo(args), "n": series.n, "p": series.p,
         "cv_grid": {"lambdas": list(grid.lambdas), "zetas": list(grid.zetas)}},
        cv=cv_dict(cv),
        timings=timings,
    )


def _truth_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".truth.json")


def cmd_simulate(args) -> RunReport:
    config = ScenarioConfig.scenario(args.scenario, args.n, args.p, kappa=args.kappa, seed=args.seed, s=args.s)
    series, truth = generate(config, args.rep)
    echo = {"scenario": args.scenario, "n": args.n, "p": args.p, "kappa": args.kappa, "s": args.s,
            "seed": args.seed, "rep": args.rep, "ar_coef": config.ar_coef, "ma_coef": config.ma_coef}
    report = RunReport("simulate", echo, extra={"truth": truth.to_dict(), "csv": str(args.out)})
    try:
        write_csv(args.out, series)
        sidecar = args.truth or _truth_path(args.out)
        sidecar.write_text(report.to_json(timings=False))
    except OSError as exc:
        raise InputError(f"cannot write {args.out}: {exc.strerror or exc}") from exc
    print(f"wrote {args.out} (n={series.n}, p={series.p}) and {sidecar}; "
          f"change points {list(truth.change_points)}")
    return report


_SOLVERS = {"dpdu": dpdu_solve, "dp": dp_reference_solve}


def _bench_one(task):
    n, p, rep, seed, lam, zeta, algorithms = task
    series, _ = generate(ScenarioConfig.scenario(1, n, p, seed=seed, s=min(5, p)), rep)
    config = DetectorConfig(lam, zeta)
    rows = []
    for alg in algorithms:
        t0 = time.perf_counter()
        res = _SOLVERS[alg](series, config)
        rows.append({"n": n, "p": p, "algorithm": alg, "rep": rep,
                     "seconds": time.perf_counter() - t0, "change_points": list(res.change_points)})
    return rows


def bench_table(n_list: Sequence[int], p_list: Sequence[int], reps: int, algorithms: Sequence[str],
                lam: float = 1.0, zeta: float = 10.0, seed: int = 0, threads: int = 1) -> list[dict]:
    """Wall time of each solver on Scenario-1 data; raises if solvers disagree."""
    # trigger JIT compilation outside the timed region
    warm, _ = generate(ScenarioConfig.scenario(1, 20, 2, seed=seed, s=2))
    for alg in algorithms:
        _SOLVERS[alg](warm, DetectorConfig(lam, zeta))
    tasks = [(n, p, r, seed, lam, zeta, tuple(algorithms)) for n in n_list for p in p_list for r in range(reps)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_bench_one, tasks))
    else:
        chunks = [_bench_one(t) for t in tasks]
    for chunk in chunks:
        found = {tuple(r["change_points"]) for r in chunk}
        if len(found) > 1:
            r0 = chunk[0]
            raise StageError("bench", f"solvers disagree at n={r0['n']} p={r0['p']} rep={r0['rep']}: "
                                      + ", ".join(f"{r['algorithm']}={r['change_points']}" for r in chunk))
    return [row for chunk in chunks for row in chunk]


def bench_medians(rows: Sequence[dict]) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r["n"], r["p"], r["algorithm"]), []).append(r["seconds"])
    return [{"n": n, "p": p, "algorithm": a, "median_seconds": statistics.median(v), "reps": len(v)}
            for (n, p, a), v in groups.items()]


def cmd_bench(args) -> RunReport:
    algorithms = list(dict.fromkeys(args.algorithms))
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    with stage("bench"):
        rows = bench_table(args.n_list, args.p_list, args.reps, algorithms, args.lam, args.zeta,
                           args.seed, _threads(args))
    timings["bench"] = time.perf_counter() - t0
    medians = bench_medians(rows)
    print(f"{'n':>6} {'p':>5} {'algorithm':>9} {'median s':>10}")
    for m in medians:
        print(f"{m['n']:6d} {m['p']:5d} {m['algorithm']:>9} {m['median_seconds']:10.4f}")
    if args.csv_out is not None:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["n", "p", "algorithm", "rep", "seconds", "k_hat"])
        w.writeheader()
        for r in rows:
            w.writerow({**{k: r[k] for k in ("n", "p", "algorithm", "rep", "seconds")},
                        "k_hat": len(r["change_points"])})
        try:
            args.csv_out.write_text(buf.getvalue())
        except OSError as exc:
            raise InputError(f"cannot write {args.csv_out}: {exc.strerror or exc}") from exc
    return RunReport(
        "bench",
        {"n_list": args.n_list, "p_list": args.p_list, "reps": args.reps, "algorithms": algorithms,
         "lambda": args.lam, "zeta": args.zeta, "seed": args.seed, "scenario": 1},
        extra={"medians": medians, "runs": rows, "identical_detections": True},
        timings=timings,
    )


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regime-shift", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="detect, refine and build intervals for change points")
    _add_data_args(p)
    p.add_argument("--lambda", dest="lam", type=_positive(float), default=None, help="Lasso penalty")
    p.add_argument("--zeta", type=_positive(float), default=None, help="per-segment penalty")
    p.add_argument("--cv", action="store_true", help="choose missing --lambda/--zeta by cross-validation")
    p.add_argument("--lambdas", type=_float_list, default=list(DEFAULT_LAMBDAS), help="CV grid for lambda")
    p.add_argument("--zetas", type=_float_list, default=list(DEFAULT_ZETAS), help="CV grid for zeta")
    _add_inference_args(p)
    _add_threads(p)
    p.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("refine", help="refine the change points of a prior report")
    _add_data_args(p)
    p.add_argument("--report", type=Path, required=True, help="JSON report holding a detection section")
    p.add_argument("--lambda", dest="lam", type=_positive(float), default=None,
                   help="Lasso penalty for the segment refits (default: from the report)")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("infer", help="confidence intervals for the change points of a prior report")
    _add_data_args(p)
    p.add_argument("--report", type=Path, required=True, help="JSON report from detect or refine")
    p.add_argument("--lambda", dest="lam", type=_positive(float), default=None)
    _add_inference_args(p)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="write a synthetic series and its ground truth")
    p.add_argument("--scenario", type=int, choices=sorted(SCENARIO_FRACTIONS), default=1)
    p.add_argument("--n", type=_positive(int), required=True)
    p.add_argument("--p", type=_positive(int), required=True)
    p.add_argument("--kappa", type=_positive(float), default=2.0)
    p.add_argument("--s", type=_positive(int), default=5, help="nonzero coefficients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rep", type=int, default=None, help="repetition stream under --seed")
    p.add_argument("--out", type=Path, required=True, help="CSV destination")
    p.add_argument("--truth", type=Path, default=None, help="ground-truth JSON (default: <out>.truth.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cv", help="cross-validation loss table")
    _add_data_args(p)
    p.add_argument("--lambdas", type=_float_list, default=list(DEFAULT_LAMBDAS))
    p.add_argument("--zetas", type=_float_list, default=list(DEFAULT_ZETAS))
    _add_threads(p)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bench", help="time the incremental and the reference solver")
    p.add_argument("--n-list", type=_int_list, default=[200, 300, 400])
    p.add_argument("--p-list", type=_int_list, default=[30, 50, 70])
    p.add_argument("--reps", type=_positive(int), default=10)
    p.add_argument("--algorithms", nargs="+", choices=sorted(_SOLVERS), default=["dp", "dpdu"])
    p.add_argument("--lambda", dest="lam", type=_positive(float), default=1.0)
    p.add_argument("--zeta", type=_positive(float), default=10.0)
    p.add_argument("--seed", type=int, default=0)
    _add_threads(p)
    p.add_argument("--csv-out", type=Path, default=None, help="per-run timings as CSV")
    p.add_argument("--out", type=Path, default=None, help="JSON report")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = args.func(args)
        _emit(report, getattr(args, "out", None) if args.command != "simulate" else None)
    except StageError as exc:
        print(f"error: numerical failure in stage '{exc.stage}': {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
