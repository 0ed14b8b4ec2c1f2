"""Acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (collected in the terminal summary
and printed immediately) and then asserts the criterion at its stated
tolerance. The two statistical criteria on Scenario 1 at ``n = 200, p = 100``
share a single 100-repetition run, which takes on the order of ten minutes
on one core.
"""

import json
import math
import os
import statistics
import subprocess
import sys
import textwrap
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import lasso_obj, prox_gradient, random_moments
from regime_shift.cli import bench_table, main
from regime_shift.data import RegressionSeries
from regime_shift.dpdu import DetectorConfig, dpdu_solve, exhaustive_solve, partition_objective
from regime_shift.inference import CiSimConfig, auto_blocks, block_sum_of_squares, empirical_quantile, simulate_argmin
from regime_shift.lasso import LassoSettings, kkt_residual, lasso_fit
from regime_shift.pipeline import RepSpec, run_reps
from regime_shift.refine import RefinementWindow
from regime_shift.simulate import ScenarioConfig, aggregate

SEED = 20240611


def record(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}): {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


# ------------------------------------------------------------------ 1

def test_criterion_1_exhaustive_oracle():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst_obj = worst_part = 0.0
    instances = 250
    for _ in range(instances):
        n = int(rng.integers(2, 13))
        p = int(rng.integers(1, 3))
        X = rng.standard_normal((n, p))
        beta = rng.standard_normal(p)
        k = int(rng.integers(0, n))
        sign = np.where(np.arange(n) < k, 1.0, -1.0)
        y = X @ beta * sign + rng.uniform(0.1, 1.0) * rng.standard_normal(n)
        s = RegressionSeries(y, X)
        cfg = DetectorConfig(float(rng.choice([0.1, 1.0])), float(rng.choice([0.5, 2.0])))
        res = dpdu_solve(s, cfg)
        best, _, losses = exhaustive_solve(s, cfg)
        scale = max(1.0, abs(best))
        worst_obj = max(worst_obj, abs(res.objective - best) / scale)
        worst_part = max(worst_part, abs(partition_objective(losses, res.boundaries(n), cfg.zeta) - best) / scale)
    elapsed = time.perf_counter() - t0
    ok = worst_obj <= 1e-9 and worst_part <= 1e-9 and elapsed < 60
    record(1, "exhaustive oracle", ok,
           f"{instances} instances, max rel gap objective {worst_obj:.2e}, partition {worst_part:.2e}, "
           f"{elapsed:.1f}s")
    assert worst_obj <= 1e-9 and worst_part <= 1e-9
    assert elapsed < 60


# ------------------------------------------------------------------ 2

def test_criterion_2_lasso():
    rng = np.random.default_rng(SEED + 2)
    t0 = time.perf_counter()
    worst_kkt = worst_gap = 0.0
    unconverged = 0
    for _ in range(1000):
        p = int(rng.integers(1, 4))
        mo = random_moments(rng, p, corr=float(rng.choice([0.0, 0.5, 0.9])))
        lam = float(np.exp(rng.uniform(math.log(0.01), math.log(5.0))))
        fit = lasso_fit(mo, LassoSettings(lam))
        unconverged += not fit.converged
        tol = 1e-6 * max(1.0, np.abs(mo.cross).max() / mo.count)
        worst_kkt = max(worst_kkt, kkt_residual(mo, fit.beta, lam) / tol)
        ref = prox_gradient(mo.gram, mo.cross, mo.count, lam)
        worst_gap = max(worst_gap, fit.objective - lasso_obj(mo.gram, mo.cross, mo.count, lam, ref))
    elapsed = time.perf_counter() - t0
    ok = worst_kkt <= 1.0 and worst_gap <= 1e-7 and unconverged == 0 and elapsed < 60
    record(2, "lasso", ok,
           f"1000 instances, max KKT residual / tolerance {worst_kkt:.2e}, max objective excess over "
           f"proximal-gradient oracle {worst_gap:.2e}, unconverged {unconverged}, {elapsed:.1f}s")
    assert unconverged == 0
    assert worst_kkt <= 1.0
    assert worst_gap <= 1e-7
    assert elapsed < 60


# ------------------------------------------------------------------ 3 & 4

@pytest.fixture(scope="module")
def scenario1_full():
    scenario = ScenarioConfig.scenario(1, 200, 100, kappa=2.0, seed=SEED)
    specs = [RepSpec(scenario, r, alphas=(0.05,)) for r in range(100)]
    t0 = time.perf_counter()
    recs = run_reps(specs)
    return recs, aggregate(recs), time.perf_counter() - t0


def test_criterion_3_localisation_fast_tier():
    scenario = ScenarioConfig.scenario(1, 200, 50, kappa=2.0, seed=SEED + 3)
    t0 = time.perf_counter()
    agg = aggregate(run_reps([RepSpec(scenario, r, infer=False) for r in range(50)]))
    elapsed = time.perf_counter() - t0
    ok = agg["exact"] >= 0.9 and elapsed < 300
    record(3, "localisation, fast tier p=50", ok,
           f"50 reps, P(K_hat=1) = {agg['exact']:.2f}, mean d_fin = {agg['d_fin_mean']:.4f}, {elapsed:.0f}s")
    assert agg["exact"] >= 0.9
    assert elapsed < 300


def test_criterion_3_localisation_full(scenario1_full):
    _, agg, elapsed = scenario1_full
    ok = agg["exact"] >= 0.95 and agg["d_fin_mean"] <= 0.01
    record(3, "localisation, n=200 p=100", ok,
           f"100 reps, P(K_hat=1) = {agg['exact']:.2f}, mean d_pre = {agg['d_pre_mean']:.4f} "
           f"(sd {agg['d_pre_sd']:.4f}), mean d_fin = {agg['d_fin_mean']:.4f} (sd {agg['d_fin_sd']:.4f}), "
           f"{elapsed:.0f}s for the shared run")
    assert agg["exact"] >= 0.95
    assert agg["d_fin_mean"] <= 0.01


def test_refinement_does_not_degrade_on_average(scenario1_full):
    _, agg, _ = scenario1_full
    assert agg["d_fin_mean"] <= agg["d_pre_mean"]


def test_criterion_4_coverage_and_width(scenario1_full):
    recs, agg, _ = scenario1_full
    (row,) = agg["inference"]["0.05"]
    cover, width = row["cover"], row["width_mean"]
    ok_cover = 0.88 <= cover <= 1.0
    ok_width = 3.5 <= width <= 8.0
    record(4, "coverage and width, n=200 p=100 alpha=0.05", ok_cover and ok_width,
           f"{row['count']} reps with K_hat=1, coverage {cover:.3f} ({'ok' if ok_cover else 'out of [0.88, 1]'}), "
           f"mean width {width:.2f} (sd {row['width_sd']:.2f}; {'ok' if ok_width else 'out of [3.5, 8.0]'})")
    assert ok_cover
    assert ok_width


# ------------------------------------------------------------------ 5

@pytest.mark.parametrize("theta, target", [(0.0, 1.0), (0.5, 2.25)])
def test_criterion_5_block_lrv(theta, target):
    window = RefinementWindow(1, 0, 40960)  # length 4096
    R = auto_blocks([window])
    kappa_hat = 1.0
    t0 = time.perf_counter()
    est = []
    for seed in range(50):
        u = np.random.default_rng([SEED, seed]).standard_normal(4097)
        z = u[1:] + theta * u[:-1]
        ss, S = block_sum_of_squares(z, R, span=window.length)
        est.append(ss / kappa_hat**2)
    mean = float(np.mean(est))
    rel = abs(mean / target - 1)
    label = "iid N(0,1)" if theta == 0 else f"MA(1) theta={theta}"
    record(5, f"block LRV, {label}", rel <= 0.15,
           f"R = {R}, S = {S}, mean over 50 seeds {mean:.3f} vs {target} (rel err {rel:.3f}), "
           f"{time.perf_counter() - t0:.2f}s")
    assert rel <= 0.15


# ------------------------------------------------------------------ 6

def test_criterion_6_argmin_symmetry():
    t0 = time.perf_counter()
    u = simulate_argmin(1.0, 1.0, CiSimConfig(B=20000, M=50, grid_n=500, seed=SEED), 1)
    mean = float(u.mean())
    lo, hi = empirical_quantile(u, 0.025), empirical_quantile(u, 0.975)
    ok = abs(mean) <= 0.15 and abs(lo + hi) <= 0.25
    record(6, "argmin symmetry", ok,
           f"B=20000, mean {mean:+.4f}, q(0.025) = {lo:.3f}, q(0.975) = {hi:.3f}, sum {lo + hi:+.3f}, "
           f"{time.perf_counter() - t0:.1f}s")
    assert abs(mean) <= 0.15
    assert abs(lo + hi) <= 0.25


# ------------------------------------------------------------------ 7

def test_criterion_7_timing():
    rows = bench_table([200], [30], 10, ["dp", "dpdu"], seed=SEED) + \
        bench_table([400], [30], 10, ["dpdu"], seed=SEED)
    med = {}
    for (n, alg) in [(200, "dp"), (200, "dpdu"), (400, "dpdu")]:
        med[n, alg] = statistics.median(r["seconds"] for r in rows if r["n"] == n and r["algorithm"] == alg)
    faster = med[200, "dpdu"] < med[200, "dp"]
    ratio = med[400, "dpdu"] / med[200, "dpdu"]
    ok = faster and 3 <= ratio <= 6
    record(7, "timing", ok,
           f"n=200 p=30 median dp {med[200, 'dp']:.3f}s, dpdu {med[200, 'dpdu']:.3f}s "
           f"(speed-up {med[200, 'dp'] / med[200, 'dpdu']:.1f}x); dpdu n=400/n=200 ratio {ratio:.2f}")
    assert faster
    assert 3 <= ratio <= 6


def test_criterion_7_single_moments_buffer():
    code = textwrap.dedent("""
        import numpy as np
        from numba.core.runtime import rtsys
        from regime_shift.dpdu import _Workspace, _dp_kernel
        from regime_shift.simulate import ScenarioConfig, generate
        out = []
        for n, p in [(50, 10), (200, 10), (200, 30)]:
            s, _ = generate(ScenarioConfig.scenario(1, n, p, seed=1))
            ws = _Workspace.allocate(n, p)
            args = (s.X, s.y, 1.0, np.array([10.0]), np.array([10.0]), 1e-7, 1000, True,
                    ws.gram, ws.cross, ws.beta, ws.grad, ws.work, ws.idx, ws.trace, ws.B, ws.pointer)
            _dp_kernel(*args)
            a = rtsys.get_allocation_stats()
            _dp_kernel(*args)
            b = rtsys.get_allocation_stats()
            out.append([b.alloc - a.alloc, sum(isinstance(x, np.ndarray) for x in args)])
        print(out)
    """)
    env = dict(os.environ, NUMBA_NRT_STATS="1")
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    counts = json.loads(proc.stdout.strip())
    ok = all(a == n for a, n in counts)
    record(7, "allocation count", ok,
           "NRT allocations per kernel call = array arguments unboxed "
           + ", ".join(f"{a}/{n}" for a, n in counts) + " at (n,p) = (50,10), (200,10), (200,30)")
    assert ok


# ------------------------------------------------------------------ 8

def test_criterion_8_determinism(tmp_path):
    data = tmp_path / "s1.csv"
    assert main(["simulate", "--n", "200", "--p", "30", "--seed", str(SEED), "--out", str(data)]) == 0
    args = ["detect", str(data), "--cv", "--alpha", "0.01", "--alpha", "0.05", "--seed", "17", "--B", "500"]
    reports = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert main(args + ["--out", str(out)]) == 0
        d = json.loads(out.read_text())
        d.pop("timings")
        reports.append(json.dumps(d, indent=2).encode())
    ok = reports[0] == reports[1]
    record(8, "determinism", ok, f"two detect runs, {len(reports[0])} bytes each excluding timings, "
                                 f"{'identical' if ok else 'different'}")
    assert ok
