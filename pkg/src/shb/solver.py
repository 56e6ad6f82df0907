"""Heavy ball iteration loop with seeded, reproducible execution.

One run is strictly sequential.  Ensembles replay the same problem under
independent streams derived from (seed, replication index) and aggregate
in replication order, so results never depend on execution order.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from shb.errors import DimensionMismatch, NonFinite, OutOfRange, ShbError
from shb.linalg import as_vector, project_onto_solutions
from shb.problems import Problem
from shb.sketch import SketchDistribution, derive_stream, draw, expected_h, f_value, stoch_grad

METRIC_L2 = "l2_error"
METRIC_F = "f_value"
METRIC_CESARO = "cesaro_f"
METRIC_SNAPSHOT = "iterate_snapshot"
ALL_METRICS = frozenset({METRIC_L2, METRIC_F, METRIC_CESARO, METRIC_SNAPSHOT})
DEFAULT_METRICS = frozenset({METRIC_L2, METRIC_F, METRIC_CESARO})

# iterates beyond this magnitude (or non-finite) abort the run
DIVERGENCE_LIMIT = 1e30


@dataclass(frozen=True)
class SolverParams:
    """Stepsize, momentum, budget, seed and recording schedule for a run."""

    omega: float
    beta: float
    max_iter: int
    seed: int
    record_every: int = 1
    metrics: frozenset = DEFAULT_METRICS

    def __post_init__(self):
        if not self.omega > 0.0:
            raise OutOfRange(f"omega must be > 0, got {self.omega!r}")
        if self.beta < 0.0:
            raise OutOfRange(f"beta must be >= 0, got {self.beta!r}")
        if self.max_iter < 1:
            raise OutOfRange("max_iter must be >= 1")
        if self.record_every < 1:
            raise OutOfRange("record_every must be >= 1")
        if self.seed < 0:
            raise OutOfRange("seed must be a nonnegative integer")
        metrics = frozenset(self.metrics)
        unknown = metrics - ALL_METRICS
        if unknown:
            raise OutOfRange(f"unknown metrics {sorted(unknown)}")
        object.__setattr__(self, "metrics", metrics)


@dataclass
class CesaroState:
    """Running sum of iterates x_1 + ... + x_k; the average is sum/count."""

    running_sum: np.ndarray
    count: int = 0

    def add(self, x: np.ndarray) -> None:
        self.running_sum += x
        self.count += 1

    def average(self) -> np.ndarray:
        if self.count == 0:
            raise OutOfRange("Cesaro average undefined before the first step")
        return self.running_sum / self.count


@dataclass
class RunTrace:
    """Recorded metrics of one run, aligned by recorded iteration index.

    l2_error holds the raw squared distance ||x_k - x*||^2 so that any
    relative-error convention can be derived from it downstream.
    cesaro_f is None at k = 0, where the running average is undefined.
    """

    ks: list[int]
    l2_error: list[float] | None
    f_value: list[float] | None
    cesaro_f: list[float | None] | None
    elapsed_seconds: list[float]
    snapshots: list[np.ndarray] | None
    final_iterate: np.ndarray
    params: SolverParams


@dataclass
class EnsembleStats:
    """Replication-averaged metrics at each recorded iteration.

    l1_sq holds ||mean over replications of (x_k - x*)||^2, the Monte
    Carlo estimate of the squared distance of the expected iterate; it
    requires the iterate_snapshot metric.
    """

    ks: list[int]
    l2_mean: list[float] | None
    f_mean: list[float] | None
    cesaro_f_mean: list[float | None] | None
    l1_sq: list[float] | None
    replications: int
    params: SolverParams


def shb_step(x_k, x_prev, grad, omega: float, beta: float) -> np.ndarray:
    """One heavy ball update: x_k - omega*grad + beta*(x_k - x_prev).

    Exactly this arithmetic order; with beta = 0 it is the plain
    stochastic gradient step.
    """
    x_k = np.asarray(x_k, dtype=np.float64)
    x_prev = np.asarray(x_prev, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if x_k.shape != x_prev.shape or x_k.shape != grad.shape:
        raise DimensionMismatch(
            f"shapes differ: x_k={x_k.shape}, x_prev={x_prev.shape}, grad={grad.shape}"
        )
    return x_k - omega * grad + beta * (x_k - x_prev)


def run(
    problem: Problem,
    dist: SketchDistribution,
    params: SolverParams,
    x0=None,
    *,
    expected_h_matrix: np.ndarray | None = None,
    xstar: np.ndarray | None = None,
    stream_index: int = 0,
) -> RunTrace:
    """Run the momentum iteration from x0 with a fresh sketch draw per step.

    The two starting iterates coincide (the first momentum difference is
    zero); recorded index k counts stochastic gradient applications, so
    the iterate at index k has consumed exactly k draws.  Metrics are
    recorded at k = 0, every record_every steps and at k = max_iter.
    Identical (problem, dist, params, x0) yield bit-identical traces.
    """
    a, b = problem.a, problem.b
    m, d = a.shape
    x0 = np.zeros(d) if x0 is None else as_vector(x0, length=d, name="x0")

    want_l2 = METRIC_L2 in params.metrics
    want_f = METRIC_F in params.metrics
    want_cesaro = METRIC_CESARO in params.metrics
    want_snap = METRIC_SNAPSHOT in params.metrics

    if want_l2 and xstar is None:
        xstar = project_onto_solutions(x0, a, b)
    eh = expected_h_matrix
    if (want_f or want_cesaro) and eh is None:
        eh = expected_h(dist, a).matrix

    rng = derive_stream(params.seed, 0, stream_index)
    omega, beta = params.omega, params.beta

    ks: list[int] = []
    l2_list: list[float] | None = [] if want_l2 else None
    f_list: list[float] | None = [] if want_f else None
    cesaro_list: list[float | None] | None = [] if want_cesaro else None
    snap_list: list[np.ndarray] | None = [] if want_snap else None
    elapsed: list[float] = []

    cesaro = CesaroState(np.zeros(d))
    t0 = time.perf_counter()

    def record(k: int, x: np.ndarray) -> None:
        ks.append(k)
        if l2_list is not None:
            diff = x - xstar
            l2_list.append(float(diff @ diff))
        if f_list is not None:
            f_list.append(f_value(a, b, x, eh))
        if cesaro_list is not None:
            cesaro_list.append(None if cesaro.count == 0 else f_value(a, b, cesaro.average(), eh))
        if snap_list is not None:
            snap_list.append(x.copy())
        elapsed.append(time.perf_counter() - t0)

    x_prev = x0.copy()
    x = x0.copy()
    record(0, x)
    schedule = params.record_every
    for k in range(1, params.max_iter + 1):
        sample = draw(dist, rng, m)
        grad = stoch_grad(a, b, x, sample)
        x_new = shb_step(x, x_prev, grad, omega, beta)
        if not (float(np.max(np.abs(x_new))) <= DIVERGENCE_LIMIT):
            raise NonFinite(f"iterate diverged at iteration {k}", iteration=k)
        x_prev = x
        x = x_new
        cesaro.add(x)
        if k % schedule == 0 or k == params.max_iter:
            record(k, x)

    return RunTrace(
        ks=ks,
        l2_error=l2_list,
        f_value=f_list,
        cesaro_f=cesaro_list,
        elapsed_seconds=elapsed,
        snapshots=snap_list,
        final_iterate=x,
        params=params,
    )


def _thread_budget() -> int:
    # replication loops are numpy micro-ops that hold the GIL, so threads
    # only pay off for large per-replication work; default to sequential
    # and treat SHB_THREADS as an explicit opt-in cap
    env = os.environ.get("SHB_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return 1


def run_ensemble(
    problem: Problem,
    dist: SketchDistribution,
    params: SolverParams,
    x0=None,
    replications: int = 1,
) -> EnsembleStats:
    """Replicate a run under independent streams and average the metrics.

    Replication r uses the stream derived from (seed, r), so replication
    0 of an ensemble is bit-identical to a plain run with the same
    params.  SHB_THREADS caps how many replications run concurrently;
    aggregation happens in replication order after all runs complete.
    """
    if replications < 1:
        raise OutOfRange("replications must be >= 1")
    a, b = problem.a, problem.b
    d = a.shape[1]
    x0 = np.zeros(d) if x0 is None else as_vector(x0, length=d, name="x0")

    want_l2 = METRIC_L2 in params.metrics
    want_snap = METRIC_SNAPSHOT in params.metrics
    xstar = project_onto_solutions(x0, a, b) if (want_l2 or want_snap) else None
    eh = None
    if METRIC_F in params.metrics or METRIC_CESARO in params.metrics:
        eh = expected_h(dist, a).matrix

    def one(r: int) -> RunTrace:
        return run(
            problem, dist, params, x0,
            expected_h_matrix=eh, xstar=xstar, stream_index=r,
        )

    budget = min(_thread_budget(), replications)
    if budget <= 1:
        traces = [one(r) for r in range(replications)]
    else:
        with ThreadPoolExecutor(max_workers=budget) as pool:
            traces = list(pool.map(one, range(replications)))

    ks = traces[0].ks
    for t in traces[1:]:
        if t.ks != ks:
            raise ShbError("replications recorded different schedules")

    def mean_over(values_per_trace):
        stacked = np.asarray(values_per_trace, dtype=np.float64)
        return [float(v) for v in stacked.mean(axis=0)]

    l2_mean = mean_over([t.l2_error for t in traces]) if want_l2 else None
    f_mean = mean_over([t.f_value for t in traces]) if traces[0].f_value is not None else None
    cesaro_mean: list[float | None] | None = None
    if traces[0].cesaro_f is not None:
        cesaro_mean = []
        for j in range(len(ks)):
            vals = [t.cesaro_f[j] for t in traces]
            cesaro_mean.append(None if vals[0] is None else float(np.mean(vals)))
    l1_sq = None
    if want_snap:
        l1_sq = []
        for j in range(len(ks)):
            mean_iterate = np.mean([t.snapshots[j] for t in traces], axis=0)
            diff = mean_iterate - xstar
            l1_sq.append(float(diff @ diff))

    return EnsembleStats(
        ks=list(ks),
        l2_mean=l2_mean,
        f_mean=f_mean,
        cesaro_f_mean=cesaro_mean,
        l1_sq=l1_sq,
        replications=replications,
        params=params,
    )
