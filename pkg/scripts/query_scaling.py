"""Tabulate predicted query counts as eps_s shrinks, for a fixed system size."""

import argparse

from qnewton.resource import CostInputs, estimate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=40000)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--kappa", type=float, default=1000.0)
    ap.add_argument("--eps", type=float, default=1e-8)
    args = ap.parse_args()

    keys = ("queries_MF", "queries_Of1", "queries_Of2", "t_q")
    print(f"{'eps_s':>7} " + " ".join(f"{k:>12}" for k in keys))
    for es in (0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005):
        rep = estimate(CostInputs(args.n, args.d, args.kappa, args.eps, es))
        print(f"{es:7g} " + " ".join(f"{getattr(rep, k):12.4e}" for k in keys))


if __name__ == "__main__":
    main()
