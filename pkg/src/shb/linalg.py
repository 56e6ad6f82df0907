"""Dense symmetric linear algebra: eigendecomposition, pseudoinverse
application, and least-norm projection onto a solution set.

Everything here is a pure function of its inputs.  Matrices are plain
float64 ndarrays and are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from shb.errors import (
    AllZero,
    AsymmetryExceedsTolerance,
    DimensionMismatch,
    Inconsistent,
    NoConvergence,
    NonSquare,
)

# Eigenvalues below REL_TOL * lambda_max are treated as zero everywhere
# (pseudoinverse cutoff, rank counting, smallest-nonzero detection).
DEFAULT_REL_TOL = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    return arr


def as_vector(v, length: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got ndim={arr.ndim}")
    if length is not None and arr.size != length:
        raise DimensionMismatch(f"{name} has length {arr.size}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SymEig:
    """Eigenvalues sorted descending; eigenvector columns aligned with them."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eig(w, *, asym_tol: float = 1e-12, clamp_tol: float = DEFAULT_REL_TOL) -> SymEig:
    """Eigendecomposition of a symmetric PSD matrix.

    Eigenvalues come back sorted descending.  Tiny negative eigenvalues
    (rounding dust, |lam| <= clamp_tol * max(1, |lam|_max)) are clamped
    to zero so PSD inputs always yield a nonnegative spectrum.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {w.shape}")
    fro = float(np.linalg.norm(w))
    asym = float(np.linalg.norm(w - w.T))
    if asym > asym_tol * max(1.0, fro):
        raise AsymmetryExceedsTolerance(
            f"relative asymmetry {asym / max(1.0, fro):.3e} exceeds {asym_tol:.0e}"
        )
    try:
        vals, vecs = np.linalg.eigh(w)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    top = float(np.max(np.abs(vals))) if vals.size else 0.0
    tol = clamp_tol * max(1.0, top)
    vals[(vals < 0.0) & (vals >= -tol)] = 0.0
    return SymEig(vals, vecs)


def pinv_apply(m, y, rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """Apply the Moore-Penrose pseudoinverse of a symmetric PSD matrix to y.

    Eigenvalues <= rel_tol * lambda_max count as zero, so components of y
    in the (numerical) null space of m are annihilated.
    """
    m = np.asarray(m, dtype=np.float64)
    eig = sym_eig(m)
    y = as_vector(y, length=m.shape[0], name="y")
    return _apply_pinv_eig(eig, y, rel_tol)


def _apply_pinv_eig(eig: SymEig, y: np.ndarray, rel_tol: float) -> np.ndarray:
    vals = eig.eigenvalues
    lmax = float(vals[0]) if vals.size else 0.0
    if lmax <= 0.0:
        return np.zeros_like(y)
    keep = vals > rel_tol * lmax
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return eig.eigenvectors @ (inv * (eig.eigenvectors.T @ y))


def pinv_psd(m, rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """Dense pseudoinverse of a symmetric PSD matrix (same cutoff as pinv_apply)."""
    eig = sym_eig(np.asarray(m, dtype=np.float64))
    vals = eig.eigenvalues
    lmax = float(vals[0]) if vals.size else 0.0
    if lmax <= 0.0:
        return np.zeros((m.shape[0], m.shape[0]))
    keep = vals > rel_tol * lmax
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return (eig.eigenvectors * inv) @ eig.eigenvectors.T


def project_onto_solutions(x0, a, b, *, residual_rtol: float = 1e-8) -> np.ndarray:
    """Closest point to x0 on the solution set of a consistent system Ax = b.

    Returns x0 - A^+ (A x0 - b), routed through the smaller Gram matrix.
    The displacement x0 - result lies in the row space of A.  Raises
    Inconsistent when the post-hoc residual check fails, which signals
    that Ax = b has no solution.
    """
    a = as_matrix(a, "a")
    rows, cols = a.shape
    x0 = as_vector(x0, length=cols, name="x0")
    b = as_vector(b, length=rows, name="b")
    r = a @ x0 - b
    if rows <= cols:
        w = a.T @ pinv_apply(a @ a.T, r)
    else:
        w = pinv_apply(a.T @ a, a.T @ r)
    xs = x0 - w
    resid = float(np.linalg.norm(a @ xs - b))
    if resid > residual_rtol * (1.0 + float(np.linalg.norm(b))):
        raise Inconsistent(
            f"projection residual {resid:.3e} too large: system has no solution"
        )
    return xs


def nonzero_min(eigenvalues, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """Smallest eigenvalue strictly above rel_tol * lambda_max.

    Expects a descending, nonnegative spectrum.  Raises AllZero when the
    matrix is zero and no such eigenvalue exists.
    """
    vals = np.asarray(eigenvalues, dtype=np.float64)
    if vals.size == 0 or float(vals[0]) <= 0.0:
        raise AllZero("spectrum has no nonzero eigenvalue")
    threshold = rel_tol * float(vals[0])
    above = vals[vals > threshold]
    if above.size == 0:
        raise AllZero("spectrum has no eigenvalue above the cutoff")
    return float(above[-1])
