#!/usr/bin/env python3
"""Wall-time comparison of the incremental solver against the reference DP.

Writes one CSV row per (n, p, algorithm, repetition), ready for a boxplot,
and prints the medians. Detections of the two solvers are checked to agree.

    python scripts/timing_figure.py --n-list 200,300,400 --p-list 30,50,70 --reps 100 --out timing.csv
"""

import argparse
import csv
import sys

from regime_shift.cli import bench_medians, bench_table


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-list", default="200,300,400")
    ap.add_argument("--p-list", default="30,50,70")
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--zeta", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="timing.csv")
    a = ap.parse_args(argv)
    # sequential on purpose: concurrent runs would distort the timings
    rows = bench_table([int(v) for v in a.n_list.split(",")], [int(v) for v in a.p_list.split(",")],
                       a.reps, ["dp", "dpdu"], a.lam, a.zeta, a.seed, threads=1)
    with open(a.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["n", "p", "algorithm", "rep", "seconds"])
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in w.fieldnames})
    for m in bench_medians(rows):
        print(f"n={m['n']:4d} p={m['p']:3d} {m['algorithm']:>4}: median {m['median_seconds']:.3f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
