#!/usr/bin/env python3
"""Run the finite-difference gradient suite and print one line per check."""

import argparse
import sys

from xsrl.gradcheck import TOLERANCE, run_suite


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=100, help="random points per primitive")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    def show(r):
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:16s} {r.max_rel_error:.2e}  {r.entries:6d} entries  {r.seconds:5.1f}s")

    results = run_suite(args.points, args.seed, show)
    worst = max(r.max_rel_error for r in results)
    print(f"max relative error {worst:.2e} (tolerance {TOLERANCE:g})")
    return 0 if worst <= TOLERANCE else 1


if __name__ == "__main__":
    sys.exit(main())
