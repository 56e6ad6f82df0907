"""Sketching distributions and the stochastic objective they induce.

A draw produces a random matrix S with one column per sketch dimension.
The per-draw weighting matrix is

    H = S (S^T A A^T S)^+ S^T,

which is PSD and makes A^T H A an orthogonal projector, so the Hessian
of the expected objective, W = A^T E[H] A, always has its spectrum
inside [0, 1].  Three families are supported:

* UnitCoordinate -- S = e_i with probability p_i (single-row sampling;
  the default weights p_i = ||A_i||^2 / ||A||_F^2 give the classical
  randomized Kaczmarz method),
* BlockRow      -- S spans a uniformly random subset of tau coordinate
  vectors (block row sampling),
* GaussianSketch -- S has i.i.d. standard normal entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple, Union

import numpy as np

from shb.errors import DimensionMismatch, OutOfRange, ShbError, ZeroRow
from shb.linalg import DEFAULT_REL_TOL, as_matrix, as_vector, nonzero_min, pinv_apply, pinv_psd, sym_eig

PROB_SUM_TOL = 1e-12
DEFAULT_MC_SAMPLES = 10_000


def derive_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (master seed, stream key).

    Each concurrent consumer must own its own stream; streams with
    distinct keys never overlap.
    """
    if seed < 0:
        raise OutOfRange("seed must be a nonnegative 64-bit integer")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class UnitCoordinate:
    """Single coordinate-vector sketches, S = e_i with probability p_i."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise OutOfRange("probabilities must be a non-empty 1-D vector")
        if np.any(p < 0.0) or not np.all(np.isfinite(p)):
            raise OutOfRange("probabilities must be finite and nonnegative")
        if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
            raise OutOfRange(f"probabilities sum to {float(p.sum())!r}, expected 1")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "_cumulative", np.cumsum(p))


@dataclass(frozen=True)
class BlockRow:
    """Uniformly random subset of block_size rows, without replacement."""

    block_size: int

    def __post_init__(self):
        if self.block_size < 1:
            raise OutOfRange("block_size must be >= 1")


@dataclass(frozen=True)
class GaussianSketch:
    """Dense sketch with i.i.d. N(0,1) entries and `width` columns."""

    width: int

    def __post_init__(self):
        if self.width < 1:
            raise OutOfRange("width must be >= 1")


SketchDistribution = Union[UnitCoordinate, BlockRow, GaussianSketch]


def row_sampling(a) -> UnitCoordinate:
    """UnitCoordinate distribution with p_i proportional to ||A_i||^2.

    Zero rows get probability zero and are never sampled; an all-zero
    matrix is rejected.
    """
    a = as_matrix(a, "a")
    norms_sq = np.einsum("ij,ij->i", a, a)
    total = float(norms_sq.sum())
    if total <= 0.0:
        raise ZeroRow("every row of the matrix is zero")
    p = norms_sq / total
    return UnitCoordinate(p / p.sum())


@dataclass(frozen=True)
class RowSample:
    index: int


@dataclass(frozen=True)
class BlockSample:
    indices: np.ndarray


@dataclass(frozen=True)
class GaussianSample:
    matrix: np.ndarray


SketchSample = Union[RowSample, BlockSample, GaussianSample]


def draw(dist: SketchDistribution, rng: np.random.Generator, m: int | None = None) -> SketchSample:
    """Draw one sketch sample from the distribution.

    UnitCoordinate uses inverse-CDF lookup over the cumulative weights;
    BlockRow draws a uniform subset without replacement; GaussianSketch
    fills an m-by-width matrix with standard normals.  BlockRow and
    GaussianSketch need the row count m.
    """
    if isinstance(dist, UnitCoordinate):
        p = dist.probabilities
        u = rng.random()
        i = int(np.searchsorted(dist._cumulative, u, side="right"))
        if i >= p.size:
            i = p.size - 1
        while p[i] == 0.0 and i > 0:  # float tail beyond the cumulative mass
            i -= 1
        return RowSample(i)
    if m is None:
        raise DimensionMismatch("row count m is required for this distribution")
    if isinstance(dist, BlockRow):
        if dist.block_size > m:
            raise OutOfRange(f"block_size {dist.block_size} exceeds row count {m}")
        idx = np.sort(rng.choice(m, size=dist.block_size, replace=False))
        return BlockSample(idx)
    if isinstance(dist, GaussianSketch):
        if dist.width > m:
            raise OutOfRange(f"sketch width {dist.width} exceeds row count {m}")
        return GaussianSample(rng.standard_normal((m, dist.width)))
    raise OutOfRange(f"unknown sketch distribution {type(dist).__name__}")


def stoch_grad(a, b, x, sample: SketchSample) -> np.ndarray:
    """Stochastic gradient A^T H (Ax - b) for one sketch sample.

    For a RowSample i this is ((A_i x - b_i) / ||A_i||^2) A_i^T, the
    randomized Kaczmarz direction.  The result always lies in the row
    space of A.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or x.shape != (a.shape[1],) or b.shape != (a.shape[0],):
        raise DimensionMismatch(
            f"incompatible shapes a={a.shape}, b={b.shape}, x={x.shape}"
        )
    if isinstance(sample, RowSample):
        row = a[sample.index]
        nrm_sq = float(row @ row)
        if nrm_sq == 0.0:
            raise ZeroRow(f"sampled zero row {sample.index}: distribution is corrupt")
        resid = float(row @ x) - float(b[sample.index])
        return (resid / nrm_sq) * row
    if isinstance(sample, BlockSample):
        sub = a[sample.indices]
        r = sub @ x - b[sample.indices]
        return sub.T @ pinv_apply(sub @ sub.T, r)
    if isinstance(sample, GaussianSample):
        s = sample.matrix
        g = s.T @ a
        t = s.T @ (a @ x - b)
        return g.T @ pinv_apply(g @ g.T, t)
    raise OutOfRange(f"unknown sketch sample {type(sample).__name__}")


class ExpectedH(NamedTuple):
    matrix: np.ndarray
    mc_samples: int | None  # None when the value is exact


def _h_for_block(a: np.ndarray, idx: np.ndarray) -> np.ndarray:
    m = a.shape[0]
    sub = a[idx]
    h = np.zeros((m, m))
    h[np.ix_(idx, idx)] = pinv_psd(sub @ sub.T)
    return h


def expected_h(
    dist: SketchDistribution,
    a,
    *,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    rng: np.random.Generator | None = None,
) -> ExpectedH:
    """E[H] for the distribution, exact where a closed form exists.

    UnitCoordinate is assembled exactly as a diagonal matrix.  BlockRow
    is enumerated exactly when C(m, tau) <= 10000, otherwise estimated
    by Monte Carlo, like GaussianSketch always is.  Estimates carry the
    sample count; exact values carry None.  The default estimator rng is
    seeded so repeat calls agree.
    """
    a = as_matrix(a, "a")
    m = a.shape[0]
    if isinstance(dist, UnitCoordinate):
        p = dist.probabilities
        if p.size != m:
            raise DimensionMismatch(f"distribution has {p.size} weights for {m} rows")
        norms_sq = np.einsum("ij,ij->i", a, a)
        bad = (p > 0.0) & (norms_sq == 0.0)
        if np.any(bad):
            raise ZeroRow(f"row {int(np.argmax(bad))} is zero but has positive probability")
        h = np.zeros(m)
        pos = p > 0.0
        h[pos] = p[pos] / norms_sq[pos]
        return ExpectedH(np.diag(h), None)
    if isinstance(dist, BlockRow):
        tau = dist.block_size
        if tau > m:
            raise OutOfRange(f"block_size {tau} exceeds row count {m}")
        n_subsets = math.comb(m, tau)
        if n_subsets <= DEFAULT_MC_SAMPLES:
            acc = np.zeros((m, m))
            for idx in combinations(range(m), tau):
                acc += _h_for_block(a, np.asarray(idx))
            h = acc / n_subsets
            return ExpectedH((h + h.T) / 2.0, None)
        rng = rng if rng is not None else np.random.default_rng(0)
        acc = np.zeros((m, m))
        for _ in range(mc_samples):
            idx = np.sort(rng.choice(m, size=tau, replace=False))
            acc += _h_for_block(a, idx)
        h = acc / mc_samples
        return ExpectedH((h + h.T) / 2.0, mc_samples)
    if isinstance(dist, GaussianSketch):
        if dist.width > m:
            raise OutOfRange(f"sketch width {dist.width} exceeds row count {m}")
        rng = rng if rng is not None else np.random.default_rng(0)
        acc = np.zeros((m, m))
        for _ in range(mc_samples):
            s = rng.standard_normal((m, dist.width))
            g = s.T @ a
            acc += s @ pinv_psd(g @ g.T) @ s.T
        h = acc / mc_samples
        return ExpectedH((h + h.T) / 2.0, mc_samples)
    raise OutOfRange(f"unknown sketch distribution {type(dist).__name__}")


@dataclass(frozen=True)
class SpectrumInfo:
    """Spectrum of W = A^T E[H] A plus the exactness flag of E[H]."""

    eigenvalues: np.ndarray
    lambda_max: float
    lambda_min_plus: float
    rank: int
    exact: bool
    expected_h: np.ndarray
    mc_samples: int | None

    def __post_init__(self):
        vals = self.eigenvalues
        if np.any(vals < 0.0) or np.any(vals > 1.0 + 1e-8):
            raise ShbError("spectrum escaped [0, 1 + 1e-8]")
        if not (0.0 < self.lambda_min_plus <= self.lambda_max <= 1.0 + 1e-8):
            raise ShbError("lambda_min_plus / lambda_max out of order")


def hessian_spectrum(
    a,
    dist: SketchDistribution,
    *,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    rng: np.random.Generator | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
) -> SpectrumInfo:
    """Assemble W = A^T E[H] A explicitly and report its spectrum.

    lambda_min_plus is the smallest eigenvalue above rel_tol*lambda_max;
    the exact flag is true iff the smallest eigenvalue of E[H] exceeds
    rel_tol, i.e. E[H] is (numerically) positive definite.
    """
    a = as_matrix(a, "a")
    eh = expected_h(dist, a, mc_samples=mc_samples, rng=rng)
    w = a.T @ eh.matrix @ a
    w = (w + w.T) / 2.0
    eig = sym_eig(w)
    vals = eig.eigenvalues
    lam_max = float(vals[0])
    lam_min_plus = nonzero_min(vals, rel_tol)
    rank = int(np.count_nonzero(vals > rel_tol * lam_max))
    eh_min = float(np.linalg.eigvalsh(eh.matrix)[0])
    return SpectrumInfo(
        eigenvalues=vals,
        lambda_max=lam_max,
        lambda_min_plus=lam_min_plus,
        rank=rank,
        exact=bool(eh_min > rel_tol),
        expected_h=eh.matrix,
        mc_samples=eh.mc_samples,
    )


def f_value(a, b, x, eh) -> float:
    """Objective value (1/2) (Ax-b)^T E[H] (Ax-b).

    With the default row-sampling weights this equals
    ||Ax - b||^2 / (2 ||A||_F^2).  Rounding dust below zero is clamped.
    """
    a = np.asarray(a, dtype=np.float64)
    b = as_vector(b, length=a.shape[0], name="b")
    x = as_vector(x, length=a.shape[1], name="x")
    eh = np.asarray(eh, dtype=np.float64)
    if eh.shape != (a.shape[0], a.shape[0]):
        raise DimensionMismatch(f"expected_h has shape {eh.shape}, expected square of dim {a.shape[0]}")
    r = a @ x - b
    val = 0.5 * float(r @ (eh @ r))
    return max(val, 0.0)
