#!/usr/bin/env python3
"""Quantiles of argmin_r {varpi |r| + sigma W(r)} from the grid simulator.

Useful for sanity checks of interval widths: an interval's half-widths are
these quantiles divided by the squared jump size.
"""

import argparse
import json
import sys

import numpy as np

from regime_shift.inference import CiSimConfig, empirical_quantile, simulate_argmin


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--varpi", type=float, default=1.0)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--B", type=int, default=20000)
    ap.add_argument("--M", type=float, default=50.0)
    ap.add_argument("--grid-n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)
    u = simulate_argmin(a.varpi, a.sigma, CiSimConfig(a.B, a.M, a.grid_n, a.seed), 1)
    levels = (0.005, 0.025, 0.05, 0.5, 0.95, 0.975, 0.995)
    print(json.dumps({"config": vars(a), "mean": float(np.mean(u)), "sd": float(np.std(u)),
                      "quantiles": {str(q): empirical_quantile(u, q) for q in levels}}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
