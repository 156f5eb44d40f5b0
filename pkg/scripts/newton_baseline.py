"""Classical Newton on both test problems over a range of grid sizes."""

import argparse
import time

import numpy as np

from qnewton.problem import make_problem
from qnewton.qnm import newton_solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="8,16,32,64,128,200")
    ap.add_argument("--eps", type=float, default=1e-8)
    args = ap.parse_args()

    print(f"{'problem':>9} {'n':>5} {'iters':>6} {'final':>10} {'max_err':>10} {'seconds':>8}")
    for name in ("diffusion", "beam"):
        for n in map(int, args.sizes.split(",")):
            p = make_problem(name, n, n)
            t0 = time.perf_counter()
            trace = newton_solve(p, eps=args.eps)
            dt = time.perf_counter() - t0
            err = np.abs(trace.solution - p.analytic_field()).max()
            print(f"{name:>9} {n:5d} {trace.iterations:6d} {trace.final_residual:10.2e} {err:10.2e} {dt:8.2f}")


if __name__ == "__main__":
    main()
