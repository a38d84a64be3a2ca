#!/usr/bin/env python3
"""Run the full synthetic experiment grid and write regret tables.

Desk-scale defaults (10 repetitions, 10k test rows); pass --full for the
large-scale settings (100 repetitions, 60k test rows). Every design gets
a detail and a summary CSV under --out-dir.
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from policytrees.bench import DESIGNS, run_experiment  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--designs", default=",".join(sorted(DESIGNS)),
                        help="comma-separated design ids")
    parser.add_argument("--methods", default="greedy-policy,optimal-policy,regress-compare")
    parser.add_argument("--n", default="100,500,2000,5000")
    parser.add_argument("--reps", type=int, default=10)
    parser.add_argument("--test-n", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--full", action="store_true",
                        help="paper-scale: 100 repetitions, 60k test rows")
    parser.add_argument("--out-dir", default="bench_results")
    args = parser.parse_args()

    reps = 100 if args.full else args.reps
    n_test = 60_000 if args.full else args.test_n
    os.makedirs(args.out_dir, exist_ok=True)
    methods = tuple(s.strip() for s in args.methods.split(",") if s.strip())
    n_grid = tuple(int(s) for s in args.n.split(","))

    for design in (s.strip() for s in args.designs.split(",")):
        t0 = time.time()
        result = run_experiment(design, methods=methods, n_grid=n_grid,
                                repetitions=reps, seed=args.seed,
                                n_test=n_test, jobs=args.jobs)
        result.write_detail(os.path.join(args.out_dir, f"{design}_detail.csv"))
        result.write_summary(os.path.join(args.out_dir, f"{design}_summary.csv"))
        print(f"== {design} ({time.time() - t0:.0f}s)")
        for row in result.summary():
            print(f"   {row[1]:>16} n={row[2]:<5} regret {row[3]:.4f} +/- {row[4]:.4f}")


if __name__ == "__main__":
    main()
