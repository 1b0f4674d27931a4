"""Inverse constructions: build (A, b) with prescribed Krylov convergence.

Two constructions are provided:

* cg_prescribed: an SPD system on which CG produces prescribed residual
  2-norms and A-norm error norms simultaneously (the eigenvalues cannot also
  be chosen; they are determined by the curves).
* gmres_prescribed: a (generally nonnormal) system with a prescribed spectrum
  on which GMRES with x0 = 0 produces any prescribed nonincreasing residual
  curve.

All matrix assembly runs in extended (pair) arithmetic; the returned
LinearSystem carries the native rounding of the operator plus the extended
original in extras["dd_operator"] for exact-arithmetic replays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .precision import DDArray, dd, dd_solve, dd_sqrt
from .problems import LinearSystem

__all__ = [
    "PrescribedCurve",
    "cg_prescribed",
    "gmres_prescribed",
    "exact_gmres_resnorms",
    "char_coeffs_from_roots",
    "char_coeffs_via_traces",
]


@dataclass
class PrescribedCurve:
    """Target residual-norm sequence f_0 >= ... >= f_{N-1} > 0 (a final exact
    zero, meaning termination at step N, may be included and is stripped),
    plus optional strictly decreasing A-norm error norms for the CG case."""

    residual_norms: np.ndarray
    error_norms_A: np.ndarray | None = None

    def __init__(self, residual_norms, error_norms_A=None):
        f = np.asarray(residual_norms, dtype=np.float64)
        if f.size and f[-1] == 0.0:
            f = f[:-1]
        if f.size < 2:
            raise ValueError("need at least two residual norms")
        if np.any(f <= 0):
            raise ValueError("residual norms must be positive (only the final "
                             "terminating value may be zero)")
        self.residual_norms = f
        if error_norms_A is not None:
            e = np.asarray(error_norms_A, dtype=np.float64)
            if e.shape != f.shape:
                raise ValueError("error norms must match residual norms in length")
            if np.any(e <= 0) or np.any(np.diff(e) >= 0):
                raise ValueError("A-norm error norms must be positive and strictly decreasing")
            self.error_norms_A = e
        else:
            self.error_norms_A = None

    @property
    def n(self):
        return len(self.residual_norms)


def cg_prescribed(curve: PrescribedCurve) -> LinearSystem:
    """SPD system (A, b = e_1) on which CG with x0 = 0 follows the prescribed
    residual and A-norm error curves.

    With nu_k = 1/f_k and sigma_k = e_k^2/(f_k f_0), the lower triangular L
    with row k equal to sigma_k * [1, nu_1, ..., nu_k] defines
    A = (L + strict_lower(L)^T)^{-1}.  Not every pair of curves is
    admissible: A must come out SPD, which is checked by Cholesky and
    surfaced as an error.
    """
    if curve.error_norms_A is None:
        raise ValueError("the CG construction needs both residual and error curves")
    f = curve.residual_norms
    e = curve.error_norms_A
    N = curve.n
    if abs(f[0] - 1.0) > 0:
        raise ValueError("f_0 must equal 1 (b = e_1 fixes ||r_0|| = 1); rescale the curve")

    fd = dd(f)
    ed = dd(e)
    nu = dd(1.0) / fd  # nu_k = 1/f_k (nu_0 = 1 since f_0 = 1)
    sigma = (ed * ed) / (fd * dd(float(f[0])))

    L = DDArray.zeros((N, N))
    for k in range(N):
        L[k, 0] = sigma[k]
        if k >= 1:
            L[k, 1:k + 1] = sigma[k] * nu[1:k + 1]

    # M = L + strictly-lower(L)^T; A = M^{-1}
    M = L.copy()
    for k in range(N):
        for j in range(k + 1, N):
            M[k, j] = L[j, k]
    M_native = M.to_native()
    try:
        linalg.cholesky(M_native)
    except linalg.NotPositiveDefiniteError as err:
        raise ValueError(
            f"inconsistent prescription: constructed matrix is not SPD ({err})") from None

    # Invert M exactly in rational arithmetic: the pair-format entries are
    # exact rationals, and kappa(M) can reach 1/sigma_{N-1}, so a floating
    # inversion would perturb A enough to destroy the prescribed trajectories
    # (exact CG amplifies operator perturbations along stagnating curves).
    A = _exact_inverse_to_dd(M)
    b = np.zeros(N)
    b[0] = 1.0
    # A x = e_1  <=>  x = M e_1 = first column of M
    x_ref = M[:, 0].to_native().copy()
    return LinearSystem(A.to_native(), b, x_ref=x_ref, label="cg-prescribed",
                        extras={"dd_operator": A, "residual_norms": f.copy(),
                                "error_norms_A": e.copy()})


def _exact_inverse_to_dd(M: DDArray) -> DDArray:
    """Exact inverse of a pair-format matrix via rational Gauss-Jordan,
    rounded back to pair format."""
    from fractions import Fraction

    N = M.shape[0]
    A = [[Fraction(M.hi[i, j]) + Fraction(M.lo[i, j]) for j in range(N)] for i in range(N)]
    I = [[Fraction(1) if i == j else Fraction(0) for j in range(N)] for i in range(N)]
    for k in range(N):
        piv = max(range(k, N), key=lambda i: abs(A[i][k]))
        if A[piv][k] == 0:
            raise ValueError("inconsistent prescription: singular matrix")
        A[k], A[piv] = A[piv], A[k]
        I[k], I[piv] = I[piv], I[k]
        inv = 1 / A[k][k]
        A[k] = [v * inv for v in A[k]]
        I[k] = [v * inv for v in I[k]]
        for i in range(N):
            if i != k and A[i][k] != 0:
                fct = A[i][k]
                A[i] = [a - fct * b for a, b in zip(A[i], A[k])]
                I[i] = [a - fct * b for a, b in zip(I[i], I[k])]
    out = DDArray.zeros((N, N))
    for i in range(N):
        for j in range(N):
            hi = float(I[i][j])
            lo = float(I[i][j] - Fraction(hi))
            out.hi[i, j] = hi
            out.lo[i, j] = lo
    return out


def char_coeffs_from_roots(eigenvalues) -> DDArray:
    """Monic polynomial coefficients (ascending powers, c[N] = 1) of
    prod (z - lambda_j), expanded in pair arithmetic.  Complex eigenvalues
    must appear in conjugate pairs and are folded into real quadratics."""
    eigs = np.asarray(eigenvalues, dtype=complex)
    N = len(eigs)
    reals = []
    quads = []  # (a, a^2 + b^2) for pairs a +- bi
    remaining = list(eigs)
    while remaining:
        lam = remaining.pop(0)
        if lam.imag == 0:
            reals.append(lam.real)
            continue
        # find the conjugate partner
        for i, mu in enumerate(remaining):
            if np.isclose(mu.real, lam.real) and np.isclose(mu.imag, -lam.imag):
                remaining.pop(i)
                break
        else:
            raise ValueError(f"eigenvalue {lam} has no conjugate partner")
        quads.append((lam.real, lam.real ** 2 + lam.imag ** 2))

    c = DDArray.zeros(N + 1)
    c[0] = 1.0
    deg = 0
    for lam in reals:
        lam_dd = dd(float(lam))
        new = DDArray.zeros(N + 1)
        new[1:deg + 2] = c[0:deg + 1]
        new[0:deg + 1] = new[0:deg + 1] - lam_dd * c[0:deg + 1]
        c, deg = new, deg + 1
    for a, m in quads:
        a2 = dd(2.0 * a)
        m_dd = dd(float(m))
        new = DDArray.zeros(N + 1)
        new[2:deg + 3] = c[0:deg + 1]
        new[1:deg + 2] = new[1:deg + 2] - a2 * c[0:deg + 1]
        new[0:deg + 1] = new[0:deg + 1] + m_dd * c[0:deg + 1]
        c, deg = new, deg + 2
    return c


def _exact_similarity_to_dd(B: DDArray, comp: DDArray):
    """B comp B^{-1} in exact rational arithmetic; returns the pair-format
    rounding together with the exact rational matrix (kept because the
    prescribed trajectories are provably exact only for the exact matrix —
    entries can reach ~|alpha| / g_N, and even pair-format rounding of such
    entries measurably perturbs the curve)."""
    from fractions import Fraction

    N = B.shape[0]

    def to_frac(X):
        return [[Fraction(X.hi[i, j]) + Fraction(X.lo[i, j]) for j in range(N)]
                for i in range(N)]

    Bf = to_frac(B)
    Cf = to_frac(comp)
    # exact inverse of B
    A = [row[:] for row in Bf]
    I = [[Fraction(1) if i == j else Fraction(0) for j in range(N)] for i in range(N)]
    for k in range(N):
        piv = max(range(k, N), key=lambda i: abs(A[i][k]))
        if A[piv][k] == 0:
            raise ValueError("degenerate construction: B is singular")
        A[k], A[piv] = A[piv], A[k]
        I[k], I[piv] = I[piv], I[k]
        inv = 1 / A[k][k]
        A[k] = [v * inv for v in A[k]]
        I[k] = [v * inv for v in I[k]]
        for i in range(N):
            if i != k and A[i][k] != 0:
                fct = A[i][k]
                A[i] = [a - fct * b for a, b in zip(A[i], A[k])]
                I[i] = [a - fct * b for a, b in zip(I[i], I[k])]
    # P = B comp, out = P * B^{-1}
    P = [[sum(Bf[i][l] * Cf[l][j] for l in range(N)) for j in range(N)] for i in range(N)]
    exact = [[sum(P[i][l] * I[l][j] for l in range(N)) for j in range(N)] for i in range(N)]
    out = DDArray.zeros((N, N))
    for i in range(N):
        for j in range(N):
            v = exact[i][j]
            hi = float(v)
            out.hi[i, j] = hi
            out.lo[i, j] = float(v - Fraction(hi))
    return out, exact


def _char_coeffs_via_root_power_sums(eigenvalues) -> DDArray:
    """Monic coefficients from the power sums p_k = sum_j lambda_j^k via
    Newton's identities, in pair arithmetic.  Complex conjugate pairs
    contribute 2 Re((a+bi)^k), tracked by a real two-term recurrence."""
    eigs = np.asarray(eigenvalues, dtype=complex)
    N = len(eigs)
    reals = [lam.real for lam in eigs if lam.imag == 0]
    pairs = []
    remaining = [lam for lam in eigs if lam.imag > 0]
    for lam in remaining:
        pairs.append((lam.real, lam.real ** 2 + lam.imag ** 2))
    p = []
    pw = [dd(float(l)) for l in reals]
    # s_k = 2 Re(z^k): s_0 = 2, s_1 = 2a, s_k = 2a s_{k-1} - |z|^2 s_{k-2}
    s_prev = [dd(2.0) for _ in pairs]
    s_cur = [dd(2.0 * a) for a, _ in pairs]
    for k in range(1, N + 1):
        tot = dd(0.0)
        for v in pw:
            tot = tot + v
        for v in s_cur:
            tot = tot + v
        p.append(tot)
        pw = [v * dd(float(l)) for v, l in zip(pw, reals)]
        nxt = []
        for (a, m), sc, sp in zip(pairs, s_cur, s_prev):
            nxt.append(dd(2.0 * a) * sc - dd(float(m)) * sp)
        s_prev, s_cur = s_cur, nxt
    return _newton_coeffs(p, N)


def _newton_coeffs(power_sums, N) -> DDArray:
    """Newton's identities: monic coefficients (ascending) from p_1..p_N."""
    e = [dd(1.0)]
    for k in range(1, N + 1):
        acc = dd(0.0)
        sign = 1.0
        for i in range(1, k + 1):
            term = e[k - i] * power_sums[i - 1]
            acc = acc + (term if sign > 0 else -term)
            sign = -sign
        e.append(acc / dd(float(k)))
    c = DDArray.zeros(N + 1)
    c[N] = 1.0
    for k in range(1, N + 1):
        c[N - k] = e[k] if k % 2 == 0 else -e[k]
    return c


def char_coeffs_via_traces(A) -> DDArray:
    """Monic characteristic coefficients (ascending powers) recovered from
    the power sums trace(A^k) via Newton's identities, in pair arithmetic.
    Independent of any root-finding; used to cross-check constructions."""
    A = dd(A) if not isinstance(A, DDArray) else A
    N = A.shape[0]
    P = A.copy()
    traces = []
    for _ in range(N):
        tr = P[0, 0]
        for i in range(1, N):
            tr = tr + P[i, i]
        traces.append(tr)
        if len(traces) < N:
            P = A @ P
    # Newton: k e_k = sum_{i=1}^{k} (-1)^{i-1} e_{k-i} p_i, e_0 = 1
    e = [dd(1.0)]
    for k in range(1, N + 1):
        acc = dd(0.0)
        sign = 1.0
        for i in range(1, k + 1):
            term = e[k - i] * traces[i - 1]
            acc = acc + (term if sign > 0 else -term)
            sign = -sign
        e.append(acc / dd(float(k)))
    # char poly: z^N - e1 z^{N-1} + e2 z^{N-2} - ... + (-1)^N eN
    c = DDArray.zeros(N + 1)
    c[N] = 1.0
    for k in range(1, N + 1):
        ck = e[k] if k % 2 == 0 else -e[k]
        c[N - k] = ck
    return c


def gmres_prescribed(curve: PrescribedCurve, eigenvalues, V=None) -> LinearSystem:
    """System with spectrum {lambda_j} on which GMRES (x0 = 0) produces the
    prescribed nonincreasing residual curve.

    b = V g with g_j = sqrt(f_{j-1}^2 - f_j^2) (f_N = 0), A = B A^B B^{-1}
    where A^B is the companion matrix of prod (z - lambda_j) and
    B = [b, v_1, ..., v_{N-1}].
    """
    f = curve.residual_norms
    N = curve.n
    eigs = np.asarray(eigenvalues, dtype=complex)
    if len(eigs) != N:
        raise ValueError("need as many eigenvalues as curve entries")
    if np.any(eigs == 0):
        raise ValueError("eigenvalues must be nonzero")
    if np.any(np.diff(f) > 0):
        raise ValueError("residual norms must be nonincreasing")
    if V is not None:
        V = np.asarray(V, dtype=np.float64)
        if np.linalg.norm(V.T @ V - np.eye(N)) > 1e-12:
            raise ValueError("V must be orthogonal")

    fd = dd(f)
    g = DDArray.zeros(N)
    for j in range(1, N):
        g[j - 1] = dd_sqrt(fd[j - 1] * fd[j - 1] - fd[j] * fd[j])
    g[N - 1] = fd[N - 1]  # f_N = 0

    c = char_coeffs_from_roots(eigs)
    if not np.all(np.isfinite(c.hi)):
        raise ValueError("polynomial coefficients overflow; use a smaller N "
                         "or rescale the spectrum")
    alpha = -c[0:N]  # char poly = z^N - sum alpha_j z^j

    comp = DDArray.zeros((N, N))
    for i in range(N - 1):
        comp[i + 1, i] = 1.0
    comp[:, N - 1] = alpha

    b = g if V is None else dd(V) @ g
    B = DDArray.zeros((N, N))
    B[:, 0] = b
    if V is None:
        for j in range(1, N):
            B[j - 1, j] = 1.0
    else:
        B[:, 1:] = dd(V[:, :N - 1])
    if abs(float(g[N - 1])) == 0.0:
        raise ValueError("degenerate construction: B is singular")

    # A = B comp B^{-1}, evaluated in exact rational arithmetic and rounded
    # to pair format: kappa(B) ~ 1/g_N, and a floating similarity would
    # perturb the prescribed trajectories.
    A, A_exact = _exact_similarity_to_dd(B, comp)

    # independent spectrum check: recover the coefficients from the power
    # sums of the prescribed roots via Newton's identities and compare with
    # the direct product expansion
    c_check = _char_coeffs_via_root_power_sums(eigs)
    scale = np.max(np.abs(c.to_native()))
    diff = np.abs((c_check - c).to_native())
    rel = diff / np.maximum(np.abs(c.to_native()), 1e-300)
    mask = np.abs(c.to_native()) > 1e-14 * scale
    if np.any(rel[mask] > 1e-20) or np.any(diff[~mask] > 1e-20 * scale):
        raise ArithmeticError("constructed matrix failed the characteristic-"
                              f"coefficient check (max rel dev {np.max(rel[mask]):.2e})")

    # A x = b with b = B e_1:  x = B comp^{-1} e_1
    e1 = np.zeros(N)
    e1[0] = 1.0
    y = dd_solve(comp, dd(e1))
    x_ref = (B @ y).to_native()
    from fractions import Fraction
    b_exact = [Fraction(g.hi[j]) + Fraction(g.lo[j]) for j in range(N)]
    return LinearSystem(A.to_native(), b.to_native().copy(), x_ref=x_ref,
                        label="gmres-prescribed",
                        extras={"dd_operator": A, "residual_norms": f.copy(),
                                "eigenvalues": eigs, "char_coeffs": c,
                                "exact_operator": A_exact, "exact_rhs": b_exact})


def exact_gmres_resnorms(system: LinearSystem, steps: int | None = None) -> np.ndarray:
    """GMRES residual norms in exact rational arithmetic, for systems that
    carry an exact operator (the prescribed-curve constructions).

    Works on the squared norms via exact normal equations over the Krylov
    matrix, so no square roots are needed until the final conversion.  This
    is the reference "no rounding at all" trajectory; fixed-precision runs on
    the rounded operator can deviate visibly because the construction is
    trajectory-sensitive to entrywise rounding.
    """
    from fractions import Fraction

    A = system.extras.get("exact_operator")
    b = system.extras.get("exact_rhs")
    if A is None or b is None:
        raise ValueError("system does not carry an exact operator")
    N = len(b)
    steps = N if steps is None else min(steps, N)

    def mv(v):
        return [sum(A[i][j] * v[j] for j in range(N)) for i in range(N)]

    def dot(u, v):
        return sum(a * c for a, c in zip(u, v))

    K = [list(b)]
    for _ in range(steps - 1):
        K.append(mv(K[-1]))
    W = [mv(col) for col in K]
    bb = dot(b, b)
    res2 = [bb]
    for k in range(1, steps + 1):
        G = [[dot(W[i], W[j]) for j in range(k)] for i in range(k)]
        rhs = [dot(W[i], b) for i in range(k)]
        y = _solve_fractions(G, rhs)
        res2.append(bb - sum(y[i] * rhs[i] for i in range(k)))
    return np.sqrt(np.maximum(np.array([float(v) for v in res2]), 0.0))


def _solve_fractions(G, rhs):
    k = len(rhs)
    Gm = [row[:] for row in G]
    y = list(rhs)
    for kk in range(k):
        piv = max(range(kk, k), key=lambda i: abs(Gm[i][kk]))
        if Gm[piv][kk] == 0:
            raise ValueError("singular normal equations")
        Gm[kk], Gm[piv] = Gm[piv], Gm[kk]
        y[kk], y[piv] = y[piv], y[kk]
        inv = 1 / Gm[kk][kk]
        Gm[kk] = [v * inv for v in Gm[kk]]
        y[kk] *= inv
        for i in range(k):
            if i != kk and Gm[i][kk] != 0:
                f = Gm[i][kk]
                Gm[i] = [a - f * c for a, c in zip(Gm[i], Gm[kk])]
                y[i] -= f * y[kk]
    return y
