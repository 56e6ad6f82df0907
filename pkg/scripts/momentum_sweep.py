#!/usr/bin/env python3
"""Desk-scale momentum comparison on a synthetic Gaussian system.

Runs single-row sampling at unit stepsize for several momentum weights
on one problem, prints the iterations-to-threshold table and writes the
long-format series plus the summary CSV for plotting.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from shb.experiments import SWEEP_THRESHOLDS, make_distribution, sweep, write_sweep_outputs
from shb.problems import gen_problem


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=300)
    ap.add_argument("--cols", type=int, default=100)
    ap.add_argument("--betas", default="0,0.2,0.3,0.4,0.5")
    ap.add_argument("--omega", type=float, default=1.0)
    ap.add_argument("--iters", type=int, default=12000)
    ap.add_argument("--record-every", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="sweep_out")
    args = ap.parse_args()

    problem = gen_problem(args.rows, args.cols, seed=args.seed)
    dist = make_distribution("row", problem.a)
    pairs = tuple((args.omega, float(b)) for b in args.betas.split(","))
    long_rows, summaries = sweep(
        problem, dist, pairs, args.iters, args.record_every, args.seed
    )
    long_path, summary_path = write_sweep_outputs(long_rows, summaries, args.out)

    header = ["beta", "status"] + [f"to {t:g}" for t in SWEEP_THRESHOLDS]
    print("  ".join(f"{h:>10}" for h in header))
    for s in summaries:
        cells = [f"{s['beta']:g}", s["status"]]
        for t in SWEEP_THRESHOLDS:
            hit = s[f"iters_to_{t:g}"]
            cells.append("-" if hit is None else str(hit))
        print("  ".join(f"{c:>10}" for c in cells))
    print(f"\nwrote {long_path} and {summary_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
