#!/usr/bin/env python3
"""Monte Carlo check of the convergence guarantees on a synthetic system.

Replicates a seeded run many times and compares the replication means
against the closed-form envelope and the averaged-iterate bound, with
momentum set to half its admissible upper bound.
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from shb.experiments import make_distribution, verify
from shb.problems import gen_problem
from shb.sketch import hessian_spectrum
from shb.solver import DEFAULT_METRICS, METRIC_SNAPSHOT, SolverParams
from shb.theory import beta_upper_bound


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=50)
    ap.add_argument("--cols", type=int, default=20)
    ap.add_argument("--omega", type=float, default=1.0)
    ap.add_argument("--iters", type=int, default=1000)
    ap.add_argument("--record-every", type=int, default=50)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="Optional JSON report path.")
    args = ap.parse_args()

    problem = gen_problem(args.rows, args.cols, seed=args.seed)
    dist = make_distribution("row", problem.a)
    spec = hessian_spectrum(problem.a, dist)
    beta = beta_upper_bound(args.omega, spec.lambda_min_plus, spec.lambda_max) / 2.0
    params = SolverParams(
        omega=args.omega,
        beta=beta,
        max_iter=args.iters,
        seed=args.seed,
        record_every=args.record_every,
        metrics=DEFAULT_METRICS | {METRIC_SNAPSHOT},
    )
    print(f"spectrum: lambda_min_plus={spec.lambda_min_plus:.5f} lambda_max={spec.lambda_max:.5f}")
    print(f"momentum: beta={beta:.6f} (half the admissible bound), reps={args.reps}")
    report = verify(problem, dist, params, replications=args.reps)
    for name in ("l2", "cesaro", "l1", "l1_le_l2"):
        section = report[name]
        status = "n/a" if not section.get("applicable") else ("PASS" if section["pass"] else "FAIL")
        print(f"  {name:9s} {status}")
    print("overall:", "PASS" if report["pass"] else "FAIL")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
        print(f"wrote {args.out}")
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
