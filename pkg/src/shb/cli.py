"""Command line interface.

Subcommands: gen, analyze, solve, sweep, verify.  Exit codes: 0 on
success, 1 on input error, 2 when a solve run diverges.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

import shb.experiments as ex
import shb.io as shio
from shb.errors import NonFinite, ShbError
from shb.problems import Problem, gen_problem, plant_solution
from shb.solver import DEFAULT_METRICS, METRIC_SNAPSHOT, SolverParams, run

INPUT_FORMATS = ("libsvm", "csv", "bundle")


def load_problem(path: str, fmt: str, seed: int) -> Problem:
    """Load a problem; non-bundle inputs get a planted right-hand side."""
    if fmt == "bundle":
        return shio.read_bundle(path)
    if fmt == "libsvm":
        a = shio.parse_libsvm(path)
    elif fmt == "csv":
        a = shio.read_csv_matrix(path)
    else:
        raise ShbError(f"unknown input format {fmt!r}")
    return plant_solution(a, seed, source=f"{fmt}:{path}")


def _parse_metrics(spec: str) -> frozenset:
    names = [t.strip() for t in spec.split(",") if t.strip()]
    return frozenset(names) if names else DEFAULT_METRICS


@click.group()
def cli():
    """Stochastic heavy ball solver and verification harness."""


@cli.command()
@click.option("--rows", type=int, required=True)
@click.option("--cols", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Bundle path (.json).")
def gen(rows, cols, seed, out_path):
    """Generate a synthetic Gaussian problem and write it as a bundle."""
    problem = gen_problem(rows, cols, seed)
    manifest = shio.write_bundle(problem, out_path)
    click.echo(f"wrote {manifest} ({rows}x{cols}, seed={seed})")


@cli.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(INPUT_FORMATS), default="bundle", show_default=True)
@click.option("--sketch", default="row", show_default=True, help="row | block:<tau> | gaussian:<tau>")
@click.option("--omega", multiple=True, type=float, default=(1.0,), show_default=True)
@click.option("--beta", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mc-samples", type=int, default=10_000, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def analyze(input_path, fmt, sketch, omega, beta, seed, mc_samples, out_path):
    """Report the sketch spectrum and every closed-form rate constant."""
    problem = load_problem(input_path, fmt, seed)
    dist = ex.make_distribution(sketch, problem.a)
    report = ex.analyze(problem, dist, omegas=tuple(omega), beta=beta, mc_samples=mc_samples)
    payload = ex.report_to_dict(report, omegas=tuple(omega))
    text = json.dumps(payload, indent=2)
    if out_path:
        Path(out_path).write_text(text + "\n")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@cli.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(INPUT_FORMATS), default="bundle", show_default=True)
@click.option("--sketch", default="row", show_default=True)
@click.option("--omega", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=0.0, show_default=True)
@click.option("--iters", type=int, default=1000, show_default=True)
@click.option("--record-every", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--metrics", default=",".join(sorted(DEFAULT_METRICS)), show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Trace path (.csv or .json).")
def solve(input_path, fmt, sketch, omega, beta, iters, record_every, seed, metrics, out_path):
    """Run one (omega, beta) configuration and write its trace."""
    spec = ex.ExperimentSpec(
        problem_source=input_path,
        sketch=sketch,
        pairs=((omega, beta),),
        max_iter=iters,
        record_every=record_every,
        seed=seed,
        metrics=_parse_metrics(metrics),
        output_format="json" if str(out_path).endswith(".json") else "csv",
        output_path=str(out_path),
    )
    problem = load_problem(input_path, fmt, spec.seed)
    dist = ex.make_distribution(spec.sketch, problem.a)
    params = SolverParams(
        omega=spec.pairs[0][0],
        beta=spec.pairs[0][1],
        max_iter=spec.max_iter,
        seed=spec.seed,
        record_every=spec.record_every,
        metrics=spec.metrics,
    )
    trace = run(problem, dist, params)
    table = ex.build_trace_table(problem, dist, trace)
    if spec.output_format == "json":
        ex.write_trace_json(table, out_path)
    else:
        ex.write_trace_csv(table, out_path)
    click.echo(f"wrote {out_path} ({len(table.rows)} records)")


@cli.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(INPUT_FORMATS), default="bundle", show_default=True)
@click.option("--sketch", default="row", show_default=True)
@click.option("--omega", type=float, default=1.0, show_default=True)
@click.option("--betas", required=True, help="Comma-separated momentum values.")
@click.option("--iters", type=int, default=1000, show_default=True)
@click.option("--record-every", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Output directory.")
def sweep(input_path, fmt, sketch, omega, betas, iters, record_every, seed, out_dir):
    """Compare several momentum values on one problem."""
    try:
        beta_values = [float(t) for t in betas.split(",") if t.strip()]
    except ValueError:
        raise ShbError(f"cannot parse --betas {betas!r}") from None
    spec = ex.ExperimentSpec(
        problem_source=input_path,
        sketch=sketch,
        pairs=tuple((omega, b) for b in beta_values),
        max_iter=iters,
        record_every=record_every,
        seed=seed,
        output_path=str(out_dir),
    )
    problem = load_problem(input_path, fmt, spec.seed)
    dist = ex.make_distribution(spec.sketch, problem.a)
    long_rows, summaries = ex.sweep(
        problem, dist, spec.pairs, spec.max_iter, spec.record_every, spec.seed
    )
    long_path, summary_path = ex.write_sweep_outputs(long_rows, summaries, out_dir)
    click.echo(f"wrote {long_path} and {summary_path}")
    for s in summaries:
        hits = ", ".join(
            f"{t:g}:{s.get(f'iters_to_{t:g}') if s.get(f'iters_to_{t:g}') is not None else '-'}"
            for t in ex.SWEEP_THRESHOLDS
        )
        click.echo(f"  pair {s['pair_id']} omega={s['omega']:g} beta={s['beta']:g} [{s['status']}] {hits}")


@cli.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(INPUT_FORMATS), default="bundle", show_default=True)
@click.option("--sketch", default="row", show_default=True)
@click.option("--omega", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=0.0, show_default=True)
@click.option("--iters", type=int, default=200, show_default=True)
@click.option("--record-every", type=int, default=10, show_default=True)
@click.option("--reps", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def verify(input_path, fmt, sketch, omega, beta, iters, record_every, reps, seed, out_path):
    """Monte Carlo verification of the convergence bounds."""
    spec = ex.ExperimentSpec(
        problem_source=input_path,
        sketch=sketch,
        pairs=((omega, beta),),
        max_iter=iters,
        record_every=record_every,
        replications=reps,
        seed=seed,
        metrics=DEFAULT_METRICS | {METRIC_SNAPSHOT},
        output_format="json",
        output_path=out_path,
    )
    problem = load_problem(input_path, fmt, spec.seed)
    dist = ex.make_distribution(spec.sketch, problem.a)
    params = SolverParams(
        omega=omega,
        beta=beta,
        max_iter=spec.max_iter,
        seed=spec.seed,
        record_every=spec.record_every,
        metrics=spec.metrics,
    )
    report = ex.verify(problem, dist, params, replications=spec.replications)
    if out_path:
        Path(out_path).write_text(json.dumps(report, indent=2) + "\n")
        click.echo(f"wrote {out_path}")
    for name in ("l2", "cesaro", "l1", "l1_le_l2"):
        section = report[name]
        status = "n/a" if not section.get("applicable") else ("PASS" if section.get("pass") else "FAIL")
        click.echo(f"  {name}: {status}")
    click.echo(f"overall: {'PASS' if report['pass'] else 'FAIL'}")


def main(argv=None) -> int:
    """Run the CLI, mapping errors onto the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="shb")
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except NonFinite as exc:
        click.echo(f"diverged: {exc}", err=True)
        return 2
    except (ShbError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
