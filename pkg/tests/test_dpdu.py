import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from regime_shift.data import IntervalMoments, RegressionSeries
from regime_shift.dpdu import (DetectorConfig, _Workspace, backtrack, dp_reference_solve, dpdu_solve, dpdu_solve_many,
                               exhaustive_solve, goodness, partition_objective)
from regime_shift.simulate import ScenarioConfig, generate


def small_series(rng, n, p, jump=True):
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p) * 1.5
    sign = np.where(np.arange(n) < n // 2, 1.0, -1.0) if jump else 1.0
    return RegressionSeries(X @ beta * sign + 0.4 * rng.standard_normal(n), X)


def test_short_interval_has_zero_loss(rng):
    s = small_series(rng, 3, 2)
    assert goodness(IntervalMoments.from_rows(s, 1, 4), DetectorConfig(1.0, 10.0)) == 0.0


def test_zero_response_has_zero_loss(rng):
    s = RegressionSeries(np.zeros(20), rng.standard_normal((20, 3)))
    assert goodness(IntervalMoments.from_rows(s, 1, 21), DetectorConfig(0.5, 2.0)) == 0.0


def test_noiseless_goodness(rng):
    X = rng.standard_normal((40, 4))
    beta = np.array([1.0, 0.0, -2.0, 0.5])
    s = RegressionSeries(X @ beta, X)
    g = goodness(IntervalMoments.from_rows(s, 1, 41), DetectorConfig(1e-6, 5.0))
    target = -np.sum((X @ beta) ** 2)
    assert g == pytest.approx(target, rel=1e-3)


@pytest.mark.parametrize("zeta", [0.5, 3.0, 50.0])
def test_zero_response_finds_nothing(rng, zeta):
    s = RegressionSeries(np.zeros(25), rng.standard_normal((25, 3)))
    res = dpdu_solve(s, DetectorConfig(1.0, zeta))
    assert res.change_points == () and res.k_hat == 0
    assert res.objective == pytest.approx(zeta)


@given(st.integers(0, 2**32 - 1), st.integers(2, 10), st.integers(1, 2),
       st.sampled_from([0.1, 1.0]), st.sampled_from([0.5, 2.0]))
def test_matches_exhaustive_partition_search(seed, n, p, lam, zeta):
    rng = np.random.default_rng(seed)
    s = small_series(rng, n, p)
    cfg = DetectorConfig(lam, zeta)
    res = dpdu_solve(s, cfg)
    best, _, losses = exhaustive_solve(s, cfg)
    assert abs(res.objective - best) <= 1e-9 * max(1.0, abs(best))
    attained = partition_objective(losses, res.boundaries(n), zeta)
    assert abs(attained - best) <= 1e-9 * max(1.0, abs(best))


@pytest.mark.parametrize("seed", range(4))
def test_optimal_substructure(seed):
    rng = np.random.default_rng(seed)
    s = small_series(rng, 40, 3)
    cfg = DetectorConfig(0.5, 3.0)
    res = dpdu_solve(s, cfg)
    B = res.dp_values  # B[t - 1] is B_t
    bounds = res.boundaries(s.n)
    for a, b in zip(bounds, bounds[1:]):
        g = goodness(IntervalMoments.from_rows(s, a, b), cfg)
        assert B[b - 1] == pytest.approx(B[a - 1] + cfg.zeta + g, rel=1e-9, abs=1e-9)
    assert B[0] == -cfg.zeta


@pytest.mark.parametrize("n, p, lam, zeta", [(30, 3, 0.5, 2.0), (45, 6, 1.0, 8.0), (20, 1, 0.1, 0.5)])
def test_reference_dp_is_identical(n, p, lam, zeta):
    s = small_series(np.random.default_rng(n), n, p)
    cfg = DetectorConfig(lam, zeta)
    a, b = dpdu_solve(s, cfg), dp_reference_solve(s, cfg)
    assert a.change_points == b.change_points
    assert a.objective == pytest.approx(b.objective, rel=1e-9)
    np.testing.assert_array_equal(a.pointers, b.pointers)


def test_deterministic(rng):
    s = small_series(rng, 50, 4)
    cfg = DetectorConfig(0.3, 4.0)
    a, b = dpdu_solve(s, cfg), dpdu_solve(s, cfg)
    assert a.change_points == b.change_points
    assert np.array_equal(a.dp_values, b.dp_values)
    assert all(np.array_equal(x, y) for x, y in zip(a.segment_betas, b.segment_betas))


def test_batched_penalties_agree_with_single_runs(rng):
    s = small_series(rng, 60, 4)
    configs = [DetectorConfig(0.5, z) for z in (2.0, 5.0, 9.0)]
    many = dpdu_solve_many(s, configs)
    for cfg, m in zip(configs, many):
        one = dpdu_solve(s, cfg)
        assert m.change_points == one.change_points
        assert m.objective == pytest.approx(one.objective, rel=1e-9, abs=1e-9)


def test_batched_requires_shared_lambda(rng):
    s = small_series(rng, 10, 2)
    with pytest.raises(ValueError):
        dpdu_solve_many(s, [DetectorConfig(0.5, 1.0), DetectorConfig(1.0, 1.0)])


def test_detects_scenario_one_change():
    s, truth = generate(ScenarioConfig.scenario(1, 200, 30, seed=11))
    res = dpdu_solve(s, DetectorConfig(1.0, 10.0))
    assert res.k_hat == 1
    assert abs(res.change_points[0] - truth.change_points[0]) <= 10
    assert len(res.segment_betas) == 2


def test_backtrack_skips_origin():
    ptr = np.full(8, -1)
    ptr[7], ptr[4] = 4, 1  # n = 6: segments [1,4) and [4,7)
    assert backtrack(ptr, 6) == (4,)


def test_backtrack_rejects_broken_chain():
    ptr = np.full(5, -1)
    ptr[4] = 4
    with pytest.raises(RuntimeError):
        backtrack(ptr, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(0.0, 1.0)
    assert DetectorConfig(1.0, 3.0).zeta_minlen == 3.0


def test_kernel_allocation_count_does_not_grow():
    """The DP kernel body allocates nothing: NRT allocations per call equal the
    number of array arguments unboxed at the call boundary, for every n and p."""
    code = textwrap.dedent("""
        import numpy as np
        from numba.core.runtime import rtsys
        from regime_shift.dpdu import _Workspace, _dp_kernel
        from regime_shift.simulate import ScenarioConfig, generate
        out = []
        for n, p in [(20, 3), (60, 3), (60, 12), (120, 12)]:
            s, _ = generate(ScenarioConfig.scenario(1, n, p, seed=1, s=min(3, p)))
            ws = _Workspace.allocate(n, p)
            args = (s.X, s.y, 0.5, np.array([4.0]), np.array([4.0]), 1e-7, 1000, True,
                    ws.gram, ws.cross, ws.beta, ws.grad, ws.work, ws.idx, ws.trace, ws.B, ws.pointer)
            _dp_kernel(*args)
            before = rtsys.get_allocation_stats()
            _dp_kernel(*args)
            after = rtsys.get_allocation_stats()
            n_arrays = sum(isinstance(a, np.ndarray) for a in args)
            out.append((after.alloc - before.alloc, after.free - before.free, n_arrays))
        print(out)
    """)
    env = dict(os.environ, NUMBA_NRT_STATS="1")
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    counts = eval(proc.stdout.strip())
    for alloc, free, n_arrays in counts:
        assert alloc == n_arrays
        assert free == alloc


def test_workspace_holds_one_moments_buffer():
    ws = _Workspace.allocate(100, 7)
    assert ws.gram.shape == (7, 7) and ws.cross.shape == (7,)
    assert ws.B.shape == (1, 102) and ws.pointer.shape == (1, 102)
