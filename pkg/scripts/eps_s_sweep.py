"""Sweep the tomography precision and summarize where QNM stops converging.

Writes the per-run CSV of ``qnewton sweep`` and prints, per eps_s, the
fraction of converged runs and the median final residual.

    python scripts/eps_s_sweep.py --problem beam --n 200 --repeats 20 --out beam.csv
"""

import argparse
import csv
import math
import os
import statistics
from collections import defaultdict

from qnewton.cli import SWEEP_HEADER, RunConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", default="diffusion", choices=["diffusion", "beam"])
    ap.add_argument("--n", type=int, default=64, help="grid points per axis")
    ap.add_argument("--eps-s", default="0.005,0.01,0.02,0.05,0.1,0.2,0.4")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    levels = [float(v) for v in args.eps_s.split(",")]
    base = RunConfig(problem=args.problem, n1=args.n, n2=args.n, eps_s=levels[0], seed=args.seed)
    rows = run_sweep(base, levels, args.repeats, jobs=args.jobs or os.cpu_count() or 1)

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_HEADER)
            w.writerows(row.cells() for row in rows)

    cells = defaultdict(list)
    for row in rows:
        cells[row.eps_s].append(row)
    print(f"{'eps_s':>8} {'converged':>10} {'median_final':>14}")
    for es in levels:
        runs = cells[es]
        finals = [r.final_residual for r in runs if math.isfinite(r.final_residual)]
        med = statistics.median(finals) if finals else math.nan
        print(f"{es:8g} {sum(r.converged for r in runs):>4}/{len(runs):<5} {med:14.3e}")


if __name__ == "__main__":
    main()
