import csv
import json
import math

import numpy as np
import pytest

from shb.errors import InsufficientReplications, NotAdmissible, OutOfRange
from shb.experiments import (
    TRACE_HEADER,
    ExperimentSpec,
    analyze,
    build_trace_table,
    first_crossing,
    make_distribution,
    report_to_dict,
    summarize_long_rows,
    sweep,
    verify,
    write_sweep_outputs,
    write_trace_csv,
    write_trace_json,
)
from shb.problems import Problem, gen_problem
from shb.sketch import BlockRow, GaussianSketch, UnitCoordinate, row_sampling
from shb.solver import DEFAULT_METRICS, METRIC_SNAPSHOT, SolverParams, run


def toy_problem() -> Problem:
    return Problem(a=np.eye(2), b=np.array([1.0, 2.0]), source="toy")


class TestExperimentSpec:
    def test_requires_pairs(self):
        with pytest.raises(OutOfRange):
            ExperimentSpec(problem_source="x", pairs=())

    def test_output_format_validated(self):
        with pytest.raises(OutOfRange):
            ExperimentSpec(problem_source="x", output_format="xml")

    def test_defaults(self):
        spec = ExperimentSpec(problem_source="x")
        assert spec.pairs == ((1.0, 0.0),)
        assert spec.output_format == "csv"


class TestMakeDistribution:
    def test_row(self):
        assert isinstance(make_distribution("row", np.eye(2)), UnitCoordinate)

    def test_block_and_gaussian(self):
        assert make_distribution("block:3", np.eye(4)) == BlockRow(3)
        assert make_distribution("gaussian:2", np.eye(4)) == GaussianSketch(2)

    def test_bad_specs(self):
        with pytest.raises(OutOfRange):
            make_distribution("block:x", np.eye(2))
        with pytest.raises(OutOfRange):
            make_distribution("rows", np.eye(2))


class TestAnalyze:
    def test_toy_reports_worked_constants(self):
        problem = toy_problem()
        dist = row_sampling(problem.a)
        report = analyze(problem, dist, omegas=(1.0,), beta=0.0)
        assert report.spectrum.lambda_max == pytest.approx(0.5, abs=1e-14)
        assert report.spectrum.lambda_min_plus == pytest.approx(0.5, abs=1e-14)
        assert report.l2.q == pytest.approx(0.5, abs=1e-14)
        assert report.beta_upper == pytest.approx(0.1123724356957945, abs=1e-12)
        assert report.spectrum.exact

    def test_dict_schema(self):
        problem = toy_problem()
        dist = row_sampling(problem.a)
        payload = report_to_dict(analyze(problem, dist), omegas=(1.0,))
        json.dumps(payload)  # must be serializable
        assert payload["schema"] == "shb-analyze-v1"
        assert payload["l1"]["norm"] == "euclidean"
        for choice in ("unit_stepsize", "inv_lmax"):
            entry = payload["l1"]["choices"][choice]
            assert entry["rate_factor"] == entry["beta"]
            assert entry["predicted_iters_to_1e-6"] >= 1
        assert payload["l2"]["predicted_iters_to_1e-6"] == math.ceil(math.log(1e-6) / math.log(0.5))

    def test_rank_deficient_reported(self):
        a = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
        problem = Problem(a=a, b=np.zeros(2), source="deficient")
        report = analyze(problem, row_sampling(a))
        assert report.spectrum.rank == 1 < a.shape[1]

    def test_inadmissible_stepsize_yields_no_l2(self):
        problem = toy_problem()
        report = analyze(problem, row_sampling(problem.a), omegas=(2.5,))
        assert report.l2 is None


class TestTraceTable:
    def test_header_exact(self):
        assert TRACE_HEADER == [
            "k",
            "l2_error_raw",
            "rel_error_x0",
            "rel_error_xstar",
            "f_value",
            "cesaro_f",
            "theory_l2_bound",
            "theory_cesaro_bound",
            "elapsed_seconds",
        ]

    def test_toy_table(self, tmp_path):
        problem = toy_problem()
        dist = row_sampling(problem.a)
        params = SolverParams(omega=1.0, beta=0.0, max_iter=30, seed=0, record_every=5)
        trace = run(problem, dist, params)
        table = build_trace_table(problem, dist, trace)
        first = dict(zip(table.header, table.rows[0]))
        assert first["k"] == 0
        assert first["rel_error_x0"] == pytest.approx(1.0)
        assert first["cesaro_f"] is None
        assert first["theory_cesaro_bound"] is None
        # unit stepsize on the identity: trace must reach zero error
        last = dict(zip(table.header, table.rows[-1]))
        assert last["l2_error_raw"] == 0.0
        # admissible momentum-free rate: envelope column populated
        assert first["theory_l2_bound"] == pytest.approx(first["l2_error_raw"])

        path = tmp_path / "t.csv"
        write_trace_csv(table, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh, strict=True))
        assert rows[0] == TRACE_HEADER
        assert rows[1][0] == "0"
        assert rows[1][2] == "1.0"
        assert rows[1][5] == ""  # empty cell for the undefined average at k=0

    def test_json_trace(self, tmp_path):
        problem = toy_problem()
        dist = row_sampling(problem.a)
        params = SolverParams(omega=1.0, beta=0.0, max_iter=10, seed=0, record_every=5)
        table = build_trace_table(problem, dist, run(problem, dist, params))
        path = tmp_path / "t.json"
        write_trace_json(table, path)
        payload = json.loads(path.read_text())
        assert payload["schema"] == "shb-trace-v1"
        assert payload["columns"] == TRACE_HEADER
        assert payload["rows"][0]["k"] == 0
        assert payload["params"]["omega"] == 1.0


class TestSweep:
    def test_requires_two_pairs(self):
        problem = toy_problem()
        with pytest.raises(OutOfRange):
            sweep(problem, row_sampling(problem.a), ((1.0, 0.0),), 10, 1, 0)

    def test_divergent_pair_marked_not_fatal(self):
        problem = toy_problem()
        dist = row_sampling(problem.a)
        long_rows, summaries = sweep(
            problem, dist, ((1.0, 0.0), (1.0, 3.0)), 3000, 50, 0
        )
        assert summaries[0]["status"] == "ok"
        assert summaries[1]["status"] == "diverged"
        assert summaries[1]["diverged_at"] >= 1
        assert all(r[0] == 0 for r in long_rows)  # only the healthy pair has rows

    def test_summary_recomputable_from_long_rows(self, tmp_path):
        problem = gen_problem(30, 10, seed=3)
        dist = row_sampling(problem.a)
        pairs = ((1.0, 0.0), (1.0, 0.2))
        long_rows, summaries = sweep(problem, dist, pairs, 2000, 10, 1)
        recomputed = summarize_long_rows(long_rows)
        for live, offline in zip(summaries, recomputed):
            assert live["pair_id"] == offline["pair_id"]
            for thr in ("iters_to_0.01", "iters_to_0.0001", "iters_to_1e-06"):
                assert live[thr] == offline[thr]

        long_path, summary_path = write_sweep_outputs(long_rows, summaries, tmp_path / "sw")
        with open(long_path, newline="") as fh:
            rows = list(csv.reader(fh, strict=True))
        assert rows[0] == ["pair_id", "omega", "beta", "k", "metric", "value"]
        # offline recomputation from the written CSV agrees too
        parsed = [
            [int(r[0]), float(r[1]), float(r[2]), int(r[3]), r[4], float(r[5])]
            for r in rows[1:]
        ]
        assert summarize_long_rows(parsed)[0]["iters_to_0.01"] == summaries[0]["iters_to_0.01"]

    def test_first_crossing(self):
        assert first_crossing([0, 5, 10], [4.0, 0.4, 0.04], 4.0, 1e-1) == 5
        assert first_crossing([0, 5], [4.0, 2.0], 4.0, 1e-6) is None


class TestVerify:
    def test_insufficient_replications(self):
        problem = toy_problem()
        params = SolverParams(omega=1.0, beta=0.0, max_iter=5, seed=0)
        with pytest.raises(InsufficientReplications):
            verify(problem, row_sampling(problem.a), params, replications=50)

    def test_nothing_applicable(self):
        problem = toy_problem()
        # stepsize beyond every hypothesis: no section applies
        params = SolverParams(omega=5.0, beta=0.01, max_iter=5, seed=0)
        with pytest.raises(NotAdmissible):
            verify(problem, row_sampling(problem.a), params, replications=100)

    def test_toy_momentum_free_short_horizon(self):
        """Bound equality case: the envelope matches the mean exactly, so
        only early checkpoints have statistical headroom."""
        problem = toy_problem()
        params = SolverParams(
            omega=1.0, beta=0.0, max_iter=2, seed=0, record_every=1,
            metrics=DEFAULT_METRICS | {METRIC_SNAPSHOT},
        )
        report = verify(problem, row_sampling(problem.a), params, replications=1000)
        assert report["l2"]["applicable"] and report["l2"]["pass"]
        assert report["cesaro"]["applicable"] and report["cesaro"]["pass"]
        assert report["l1_le_l2"]["pass"]
        assert not report["l1"]["applicable"]  # beta = 0 is outside the accelerated region
        json.dumps(report)

    def test_toy_with_momentum(self):
        problem = toy_problem()
        params = SolverParams(
            omega=1.0, beta=0.06, max_iter=40, seed=0, record_every=5,
            metrics=DEFAULT_METRICS | {METRIC_SNAPSHOT},
        )
        report = verify(problem, row_sampling(problem.a), params, replications=500)
        assert report["l2"]["pass"] and report["cesaro"]["pass"] and report["pass"]

    def test_accelerated_section_mechanics(self):
        """The expected-iterate section activates for an accelerated pairing
        and produces a finite fitted slope with the documented limit."""
        import math

        from shb.sketch import hessian_spectrum
        from shb.theory import l1_params

        problem = gen_problem(12, 5, seed=14)
        dist = row_sampling(problem.a)
        spec = hessian_spectrum(problem.a, dist)
        p = l1_params("inv_lmax", spec.lambda_min_plus, spec.lambda_max)
        params = SolverParams(
            omega=p.omega, beta=p.beta, max_iter=10, seed=0, record_every=1,
            metrics=DEFAULT_METRICS | {METRIC_SNAPSHOT},
        )
        report = verify(problem, dist, params, replications=150)
        section = report["l1"]
        assert section["applicable"]
        assert isinstance(section["slope"], float)
        assert section["slope_limit"] == pytest.approx(math.log(p.beta) + 0.05)
        assert section["fit_ks"][0] >= 1
        json.dumps(report)

    def test_accelerated_section_exact_zero_decay(self):
        """Full-width block sketches pin the iterate after one step; the
        all-zero expected-iterate estimate counts as an immediate pass."""
        problem = gen_problem(6, 3, seed=15)
        dist = BlockRow(6)  # every draw determines the solution exactly
        params = SolverParams(
            omega=1.0, beta=(1 - math.sqrt(0.99)) ** 2, max_iter=6, seed=0,
            record_every=1, metrics=DEFAULT_METRICS | {METRIC_SNAPSHOT},
        )
        report = verify(problem, dist, params, replications=100)
        assert report["l1"]["applicable"]
        assert report["l1"]["pass"]
        assert report["l1"]["slope"] is None
