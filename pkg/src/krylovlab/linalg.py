"""Dense/sparse linear algebra used by the generators, solvers and diagnostics.

Factorizations and eigensolvers are backed by LAPACK (via numpy/scipy); the
module contract is in the error reporting and the return conventions:
eigenvalues ascending for symmetric input, lexicographic (re, im) for general
input, singular values descending.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse

__all__ = [
    "FactorizationError",
    "NotPositiveDefiniteError",
    "lu_solve",
    "cholesky",
    "sym_eigen",
    "symtrid_eigenvalues",
    "general_eigenvalues",
    "singular_values",
    "numerical_rank",
    "matrix_2norm",
]


class FactorizationError(np.linalg.LinAlgError):
    """Singular-to-working-precision pivot; carries the pivot index."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NotPositiveDefiniteError(FactorizationError):
    """Cholesky hit a non-positive pivot (usable as an SPD test)."""


def _as_dense(A):
    if scipy.sparse.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=np.float64)


def lu_solve(A, B):
    """Solve A X = B with LU and partial pivoting.

    Raises FactorizationError naming the pivot index when A is singular to
    working precision.
    """
    A = _as_dense(A)
    lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    d = np.abs(np.diag(lu))
    scale = np.max(d) if d.size else 0.0
    bad = np.nonzero(d <= scale * A.shape[0] * np.finfo(float).eps)[0]
    if scale == 0.0 or bad.size:
        idx = int(bad[0]) if bad.size else 0
        raise FactorizationError(f"matrix singular to working precision at pivot {idx}", pivot=idx)
    return scipy.linalg.lu_solve((lu, piv), np.asarray(B, dtype=np.float64), check_finite=False)


def cholesky(A):
    """Lower-triangular G with G G^T = A.

    Raises NotPositiveDefiniteError with the index of the first non-positive
    pivot; callers use this as a definiteness test, not only as a failure.
    """
    M = _as_dense(A)
    if not np.allclose(M, M.T, rtol=0, atol=1e-10 * max(1.0, np.max(np.abs(M)))):
        raise ValueError("cholesky requires a symmetric matrix")
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pivot = _first_bad_pivot(M)
        raise NotPositiveDefiniteError(
            f"matrix not positive definite (pivot {pivot})", pivot=pivot
        ) from None


def _first_bad_pivot(M):
    # Slow path, only entered after a definiteness failure: redo the
    # factorization column by column to locate the offending pivot.
    M = M.copy()
    n = M.shape[0]
    for k in range(n):
        if M[k, k] <= 0:
            return k
        M[k, k] = np.sqrt(M[k, k])
        M[k + 1:, k] /= M[k, k]
        M[k + 1:, k + 1:] -= np.outer(M[k + 1:, k], M[k + 1:, k])
    return n - 1


def sym_eigen(A):
    """All eigenvalues of a symmetric matrix, ascending, as a Spectrum."""
    from .problems import Spectrum

    M = _as_dense(A)
    vals = np.linalg.eigvalsh(M)
    return Spectrum(np.sort(vals), validate=False)


def symtrid_eigenvalues(alpha, beta):
    """Eigenvalues of the symmetric tridiagonal with diagonal alpha and
    off-diagonal beta (Ritz values when (alpha, beta) come from Lanczos)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.size and np.any(beta == 0):
        idx = int(np.nonzero(beta == 0)[0][0])
        raise ValueError(f"reducible tridiagonal: zero off-diagonal at index {idx}; split there")
    if alpha.size == 1:
        return np.array([alpha[0]])
    return np.sort(scipy.linalg.eigvalsh_tridiagonal(alpha, beta))


def general_eigenvalues(A):
    """Eigenvalues of a general real matrix, sorted lexicographically by
    (re, im); conjugate pairs are returned as exact mirror images."""
    M = _as_dense(A)
    vals = np.linalg.eigvals(M)
    # enforce exact conjugate symmetry of pairs
    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]
    out = vals.copy()
    i = 0
    while i < len(out):
        if abs(out[i].imag) > 0 and i + 1 < len(out):
            a, b = out[i], out[i + 1]
            if np.isclose(a.real, b.real) and np.isclose(a.imag, -b.imag):
                re = 0.5 * (a.real + b.real)
                im = 0.5 * (abs(a.imag) + abs(b.imag))
                out[i] = complex(re, -im)
                out[i + 1] = complex(re, im)
                i += 2
                continue
        i += 1
    order = np.lexsort((out.imag, out.real))
    return out[order]


def singular_values(A):
    """Singular values of a real dense matrix, descending."""
    return np.linalg.svd(_as_dense(A), compute_uv=False)


def numerical_rank(A, tau):
    """Number of singular values strictly greater than the absolute
    threshold tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if isinstance(A, np.ndarray) and (A.size == 0 or min(A.shape) == 0):
        return 0
    return int(np.sum(singular_values(A) > tau))


def matrix_2norm(A, max_exact=1200, tol=1e-6, maxit=500):
    """Spectral norm: exact sigma_max for moderate sizes, power iteration on
    A^T A above (relative tolerance 1e-6, capped)."""
    A = _as_dense(A) if not scipy.sparse.issparse(A) else A
    n = max(A.shape)
    if n <= max_exact and not scipy.sparse.issparse(A):
        s = singular_values(A)
        return float(s[0]) if s.size else 0.0
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(maxit):
        y = A.T @ (A @ x)
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        x = y / lam
        if abs(lam - prev) <= tol * lam:
            break
        prev = lam
    return float(np.sqrt(lam))
