"""Independent reference computations used by several test modules."""

import itertools
import math

import numpy as np

from regime_shift.data import IntervalMoments, RegressionSeries


def naive_moments(series: RegressionSeries, start: int, stop: int):
    """Double-loop sums over 1-based rows ``start..stop-1``."""
    p = series.p
    gram = [[0.0] * p for _ in range(p)]
    cross = [0.0] * p
    for t in range(start, stop):
        x = series.X[t - 1]
        for i in range(p):
            cross[i] += series.y[t - 1] * x[i]
            for j in range(p):
                gram[i][j] += x[i] * x[j]
    return np.array(gram), np.array(cross)


def lasso_obj(gram, cross, m, lam, beta):
    return float((beta @ gram @ beta - 2 * cross @ beta) / m + lam / math.sqrt(m) * np.abs(beta).sum())


def prox_gradient(gram, cross, m, lam, iters=200_000, tol=1e-15):
    """Accelerated proximal gradient (FISTA with adaptive restart) run to a tight tolerance."""
    p = len(cross)
    L = 2 * max(np.linalg.eigvalsh(gram).max(), 1e-300) / m
    step = 1.0 / L
    pen = lam / math.sqrt(m) * step
    x = np.zeros(p)
    z = x.copy()
    t = 1.0
    for _ in range(iters):
        g = 2.0 / m * (gram @ z - cross)
        v = z - step * g
        x_new = np.sign(v) * np.maximum(np.abs(v) - pen, 0.0)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        if (z - x_new) @ (x_new - x) > 0:  # restart
            t_new = 1.0
            z = x_new.copy()
        else:
            z = x_new + (t - 1) / t_new * (x_new - x)
        if np.max(np.abs(x_new - x)) < tol:
            x = x_new
            break
        x, t = x_new, t_new
    return x


def lasso_enumerate(gram, cross, m, lam):
    """Exact minimiser for small p by enumerating supports and sign patterns."""
    p = len(cross)
    thr = lam * math.sqrt(m) / 2
    best, best_beta = 0.0, np.zeros(p)
    for k in range(1, p + 1):
        for A in itertools.combinations(range(p), k):
            A = list(A)
            G = gram[np.ix_(A, A)]
            if np.linalg.matrix_rank(G) < k:
                continue
            for signs in itertools.product((-1.0, 1.0), repeat=k):
                b = np.linalg.solve(G, cross[A] - thr * np.array(signs))
                if np.any(np.sign(b) != signs):
                    continue
                beta = np.zeros(p)
                beta[A] = b
                val = lasso_obj(gram, cross, m, lam, beta)
                if val < best:
                    best, best_beta = val, beta
    return best, best_beta


def random_moments(rng, p, m=None, corr=0.0):
    """Moments of a random design with ``m`` rows and equicorrelation ``corr``."""
    m = int(rng.integers(1, 60)) if m is None else m
    C = (1 - corr) * np.eye(p) + corr * np.ones((p, p))
    X = rng.standard_normal((m, p)) @ np.linalg.cholesky(C).T
    beta = rng.standard_normal(p) * (rng.random(p) < 0.6)
    y = X @ beta + rng.standard_normal(m) * rng.uniform(0.05, 2.0)
    return IntervalMoments(X.T @ X, X.T @ y, m)
