"""Convergence bounds, spectral diagnostics, and finite-precision trajectory
analysis: the kappa and discrete min-max CG bounds (Remez exchange with an
equioscillation certificate), the worst-case eigenvalue formula, GMRES disk
bounds, Ritz/harmonic Ritz values, cumulative spectral densities,
orthogonality/backward-error measures, the exact-vs-finite-precision
trajectory map, and initial-guess rescaling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .precision import dd
from .problems import Spectrum

__all__ = [
    "BoundReport",
    "CSDFunction",
    "MinmaxExchangeError",
    "kappa_bound",
    "minmax_bound",
    "worstcase_formula",
    "bound_report",
    "disk_bound",
    "gmres_spectral_bound",
    "ritz_values",
    "harmonic_ritz",
    "csd",
    "csd_eval",
    "csd_sup_distance",
    "loss_of_orthogonality",
    "backward_error",
    "trajectory_map",
    "rescale_x0",
]


def kappa_bound(kappa, k):
    """2 ((sqrt(kappa) - 1)/(sqrt(kappa) + 1))^k, the extreme-eigenvalue CG
    bound on the relative A-norm error."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if k < 0:
        raise ValueError("k must be >= 0")
    s = np.sqrt(kappa)
    return 2.0 * ((s - 1.0) / (s + 1.0)) ** k


# ---------------------------------------------------------------------------
# discrete min-max via Remez exchange


class MinmaxExchangeError(RuntimeError):
    """Exchange stagnated without an equioscillation certificate; carries the
    best value reached and the certificate gap."""

    def __init__(self, message, best_value, gap):
        super().__init__(message)
        self.best_value = best_value
        self.gap = gap


def _cheb_vander(x, k, lo, hi):
    """Chebyshev basis T_0..T_k scaled to [lo, hi], evaluated at x."""
    t = (2.0 * np.asarray(x, dtype=float) - (lo + hi)) / (hi - lo)
    V = np.empty((np.size(t), k + 1))
    V[:, 0] = 1.0
    if k >= 1:
        V[:, 1] = t
    for j in range(2, k + 1):
        V[:, j] = 2.0 * t * V[:, j - 1] - V[:, j - 2]
    return V


def minmax_bound(spec: Spectrum, k, max_exchanges=200, stag_tol=1e-13):
    """min over degree-k polynomials p with p(0) = 1 of max_i |p(lambda_i)|
    on the discrete eigenvalue set, solved by Remez exchange.

    Returns (value, active_set) where active_set holds the k+1 eigenvalues of
    the final equioscillation reference.  k at or above the number of
    distinct eigenvalues gives value 0.
    """
    nodes = np.unique(np.asarray(spec.values if isinstance(spec, Spectrum) else spec,
                                 dtype=float))
    m = len(nodes)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= m:
        return 0.0, nodes
    lo, hi = nodes[0], nodes[-1]

    # initial reference: k+1 nodes picked greedily to maximize the product of
    # pairwise distances (Leja ordering) -- this spreads the reference across
    # the set and keeps the reference system well conditioned even when the
    # spectrum has tight clusters
    ref_idx = [int(np.argmax(np.abs(nodes))), ]
    logdist = np.full(m, -np.inf)
    logdist[:] = np.log(np.abs(nodes - nodes[ref_idx[0]]) + 1e-300)
    logdist[ref_idx[0]] = -np.inf
    while len(ref_idx) < k + 1:
        nxt = int(np.argmax(logdist))
        ref_idx.append(nxt)
        logdist += np.log(np.abs(nodes - nodes[nxt]) + 1e-300)
        logdist[nxt] = -np.inf
    ref_idx = sorted(ref_idx)

    V_all = _cheb_vander(nodes, k, lo, hi)
    v0 = _cheb_vander([0.0], k, lo, hi)[0]
    best = np.inf
    best_h = 0.0
    stagnant = 0
    force_extended = False
    for _ in range(max_exchanges):
        ref = np.array(ref_idx)
        # solve for coefficients c and level h:
        #   p(node_i) - (-1)^i h = 0  on the reference,  p(0) = 1
        signs = (-1.0) ** np.arange(k + 1)
        Asys = np.zeros((k + 2, k + 2))
        Asys[:k + 1, :k + 1] = V_all[ref]
        Asys[:k + 1, k + 1] = -signs
        Asys[k + 1, :k + 1] = v0
        rhs = np.zeros(k + 2)
        rhs[k + 1] = 1.0
        # clustered reference nodes make the Chebyshev system arbitrarily ill
        # conditioned even though the level is perfectly determined; in that
        # regime bypass the system and get the level and the polynomial values
        # from the closed barycentric-Lagrange form (stable products of
        # ratios, accumulated in extended precision)
        if force_extended or np.linalg.cond(Asys) > 1e9:
            h, p = _alternating_reference_level(nodes, ref)
        else:
            sol = linalg.lu_solve(Asys, rhs)
            p = V_all @ sol[:k + 1]
            h = abs(sol[k + 1])
        absp = np.abs(p)
        maxval = float(np.max(absp))
        if maxval - h <= stag_tol * max(maxval, 1e-300) or maxval <= h * (1.0 + 1e-12):
            return maxval, nodes[ref]
        best = min(best, maxval)
        # progress measure: the exchange raises the level h monotonically, so
        # a run of exchanges without an h increase means roundoff cycling
        if h > best_h * (1.0 + 1e-15):
            best_h = h
            stagnant = 0
        else:
            stagnant += 1
            if stagnant > 20:
                if not force_extended:
                    # cycling can come from roundoff in the double-precision
                    # evaluation: retry the exchange in extended precision
                    force_extended = True
                    stagnant = 0
                    continue
                if maxval - h <= 1e-9 * maxval:
                    # roundoff-limited equioscillation: accept the certificate
                    return maxval, nodes[ref]
                raise MinmaxExchangeError(
                    f"Remez exchange stagnated at value {best:.6e} with "
                    f"certificate gap {maxval - h:.3e}", best, maxval - h)
        # multipoint exchange: one extremum of |p| per maximal sign run.
        # Safe to adopt wholesale only when the runs alternate into exactly
        # k+1 groups that all reach the current level; otherwise fall back to
        # the classic single-point exchange (swap the global maximizer into
        # the reference keeping sign alternation), which increases the level
        # monotonically.
        cand = []
        i = 0
        while i < m:
            s = np.sign(p[i])
            j = i
            top = i
            while j < m and np.sign(p[j]) == s:
                if absp[j] > absp[top]:
                    top = j
                j += 1
            cand.append(top)
            i = j
        if len(cand) == k + 1 and np.all(absp[cand] >= h * (1.0 - 1e-12)):
            ref_idx = cand
        else:
            ref_idx = _single_point_exchange(ref_idx, int(np.argmax(absp)), p)
    raise MinmaxExchangeError(
        f"Remez exchange did not converge in {max_exchanges} steps "
        f"(best {best:.6e})", best, np.nan)


def _alternating_reference_level(nodes, ref):
    """Level h and values on all nodes of the degree-k polynomial with
    p(0) = 1 that alternates +-h on the k+1 reference nodes.

    Uses the closed form h = 1/sum_i |l_i(0)| (Lagrange basis of the
    reference) and barycentric interpolation for the off-reference values;
    both are products of ratios of node differences, stable for clustered
    references where a coefficient solve is hopeless.
    """
    m = len(nodes)
    ref = np.asarray(ref)
    x = nodes[ref]
    kp1 = len(x)
    # the products below can over/underflow double range on tightly clustered
    # references, so every running product is kept as a mantissa near 1 and a
    # separate power-of-two exponent (power-of-two rescaling is exact)
    li_m, li_e = [], []  # |l_i(0)| = prod_{j != i} x_j / |x_j - x_i|
    w_m, w_e = [], []    # barycentric weights 1 / prod_{j != i} (x_i - x_j)
    for i in range(kp1):
        t, te = dd(1.0), 0
        wi, we = dd(1.0), 0
        for j in range(kp1):
            if j != i:
                t = t * dd(float(x[j])) / dd(float(abs(x[j] - x[i])))
                wi = wi / dd(float(x[i] - x[j]))
                e = math.frexp(float(t.hi))[1]
                t = t * dd(math.ldexp(1.0, -e))
                te += e
                e = math.frexp(float(wi.hi))[1]
                wi = wi * dd(math.ldexp(1.0, -e))
                we += e
        li_m.append(t)
        li_e.append(te)
        w_m.append(wi)
        w_e.append(we)
    E = max(li_e)
    total = dd(0.0)
    for t, e in zip(li_m, li_e):
        total = total + t * dd(math.ldexp(1.0, e - E))
    h_m = dd(1.0) / total  # h = h_m * 2^{-E}
    h_e = -E
    hf = math.ldexp(float(h_m), h_e) if h_e > -1075 else 0.0
    # y_i = (-1)^i h makes p(0) = sum_i l_i(0) y_i = h sum_i |l_i(0)| = 1,
    # because l_i(0) alternates in sign when all nodes sit right of 0
    p = np.zeros(m)
    in_ref = np.zeros(m, dtype=bool)
    in_ref[ref] = True
    hsub = max(hf, 5e-324)  # keep the alternation signs even below tiny h
    for i, idx in enumerate(ref):
        p[idx] = hsub if i % 2 == 0 else -hsub
    others = np.nonzero(~in_ref)[0]
    if others.size:
        xo = nodes[others]
        pref_m = dd(np.ones(others.size))
        pref_e = np.zeros(others.size, dtype=np.int64)
        for xj in x:
            pref_m = pref_m * dd(xo - float(xj))
            e = np.frexp(pref_m.hi)[1]
            pref_m = pref_m * dd(np.ldexp(1.0, -e))
            pref_e += e
        We = max(w_e)
        s = dd(np.zeros(others.size))
        for i in range(kp1):
            yi = h_m if i % 2 == 0 else dd(0.0) - h_m
            term = w_m[i] * yi * dd(math.ldexp(1.0, w_e[i] - We))
            s = s + term / dd(xo - float(x[i]))
        pm = (pref_m * s).to_native()
        pe = np.clip(pref_e + (We + h_e), -2200, 2200).astype(np.int64)
        with np.errstate(over="ignore", under="ignore"):
            po = np.ldexp(pm, pe)
        po = np.where((pm != 0.0) & (po == 0.0), np.sign(pm) * 5e-324, po)
        p[others] = po
    return hf, p


def _single_point_exchange(ref_idx, t, p):
    """Swap node t (the global maximizer of |p|) into the sorted reference
    so that p keeps alternating signs on it."""
    ref = list(ref_idx)
    if t in ref:
        return ref
    s = np.sign(p[t])
    if t < ref[0]:
        if np.sign(p[ref[0]]) == s:
            ref[0] = t
        else:
            ref = [t] + ref[:-1]
    elif t > ref[-1]:
        if np.sign(p[ref[-1]]) == s:
            ref[-1] = t
        else:
            ref = ref[1:] + [t]
    else:
        i = next(j for j in range(len(ref) - 1) if ref[j] < t < ref[j + 1])
        if np.sign(p[ref[i]]) == s:
            ref[i] = t
        else:
            ref[i + 1] = t
    return sorted(ref)


def worstcase_formula(active):
    """(sum_i prod_{j != i} lam_j / |lam_j - lam_i|)^{-1} over k+1 distinct
    positive eigenvalues: the exact worst-case k-step CG value on that set.
    Products are accumulated in extended precision."""
    lam = np.asarray(active, dtype=np.float64)
    if len(np.unique(lam)) != len(lam):
        raise ValueError("eigenvalues must be distinct")
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    total = dd(0.0)
    for i in range(len(lam)):
        ratios = np.delete(lam, i) / np.abs(np.delete(lam, i) - lam[i])
        term = dd(1.0)
        for r in ratios:
            term = term * dd(float(r))
        total = total + term
    return float(dd(1.0) / total)


@dataclass
class BoundReport:
    k: int
    kappa_bound: float
    minmax_bound: float
    active_eigenvalues: np.ndarray
    worstcase_formula_value: float


def bound_report(spec: Spectrum, k) -> BoundReport:
    """Evaluate the full CG bound chain at step k on a positive spectrum."""
    spec.require_spd()
    kb = kappa_bound(spec.kappa, k)
    mv, active = minmax_bound(spec, k)
    wc = worstcase_formula(active) if 0 < len(active) <= k + 1 and mv > 0 else mv
    return BoundReport(k=k, kappa_bound=kb, minmax_bound=mv,
                       active_eigenvalues=active, worstcase_formula_value=wc)


# ---------------------------------------------------------------------------
# GMRES bounds


def disk_bound(c, radius, k):
    """(radius/|c|)^k for a spectrum enclosed in the disk of center c."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if radius >= abs(c):
        raise ValueError("origin inside disk: bound not applicable")
    return float((radius / abs(c)) ** k)


def gmres_spectral_bound(eigens, kappa_X, k):
    """kappa(X) times a min-max estimate over the spectrum.

    Real spectra use the discrete Remez min-max; complex spectra fall back to
    the bound over an enclosing disk, reported in the returned info dict.
    """
    eigs = np.asarray(eigens, dtype=complex)
    if np.any(eigs == 0):
        raise ValueError("spectrum contains the origin")
    if np.all(eigs.imag == 0):
        vals = np.sort(eigs.real)
        value, active = minmax_bound(Spectrum(vals, validate=False), k)
        return kappa_X * value, {"kind": "real-minmax", "active": active}
    c = complex(np.mean(eigs))
    radius = float(np.max(np.abs(eigs - c)))
    return kappa_X * disk_bound(c, radius, k), {
        "kind": "disk-enclosure", "center": c, "radius": radius}


# ---------------------------------------------------------------------------
# Ritz values


def ritz_values(trace, k) -> Spectrum:
    """Ritz values at step k: eigenvalues of the Lanczos tridiagonal T_k
    recovered from a CG/Lanczos trace."""
    alpha = np.asarray(trace.lanczos_alpha if hasattr(trace, "lanczos_alpha") else trace[0],
                       dtype=float)
    beta = np.asarray(trace.lanczos_beta if hasattr(trace, "lanczos_beta") else trace[1],
                      dtype=float)
    if k < 1 or k > len(alpha):
        raise ValueError(f"k must be in 1..{len(alpha)}")
    vals = linalg.symtrid_eigenvalues(alpha[:k], beta[:k - 1])
    return Spectrum(vals, validate=False)


def harmonic_ritz(H, k=None):
    """Harmonic Ritz values from an Arnoldi Hessenberg H of shape (m+1, m):
    eigenvalues of H_k + h_{k+1,k}^2 f e_k^T with H_k^T f = e_k.  These are
    the roots of the GMRES residual polynomial at step k."""
    H = np.asarray(H, dtype=float)
    m = H.shape[1]
    if k is None:
        k = m
    if not (1 <= k <= m):
        raise ValueError(f"k must be in 1..{m}")
    Hk = H[:k, :k]
    h2 = H[k, k - 1] ** 2
    ek = np.zeros(k)
    ek[-1] = 1.0
    f = linalg.lu_solve(Hk.T, ek)
    M = Hk + h2 * np.outer(f, ek)
    return linalg.general_eigenvalues(M)


# ---------------------------------------------------------------------------
# cumulative spectral density


@dataclass
class CSDFunction:
    """Right-continuous step function from 0 to 1 with equal jumps at each
    node."""

    nodes: np.ndarray

    def __init__(self, nodes):
        nodes = np.sort(np.asarray(nodes, dtype=float))
        if nodes.size == 0:
            raise ValueError("need at least one node")
        self.nodes = nodes

    @property
    def step(self):
        return 1.0 / len(self.nodes)

    def __call__(self, x):
        return csd_eval(self, x)


def csd(points) -> CSDFunction:
    return CSDFunction(points)


def csd_eval(f: CSDFunction, x):
    idx = np.searchsorted(f.nodes, np.asarray(x, dtype=float), side="right")
    out = idx / len(f.nodes)
    return float(out) if np.ndim(x) == 0 else out


def csd_sup_distance(f: CSDFunction, g: CSDFunction):
    """sup_x |f(x) - g(x)|, attained at the union of the node sets."""
    pts = np.union1d(f.nodes, g.nodes)
    return float(np.max(np.abs(csd_eval(f, pts) - csd_eval(g, pts))))


# ---------------------------------------------------------------------------
# finite-precision diagnostics


def loss_of_orthogonality(V):
    """||I - V^T V||_F for a computed basis with unit-normalized columns."""
    V = np.asarray(V, dtype=float)
    norms = np.linalg.norm(V, axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise ValueError("columns must be unit-normalized")
    G = V.T @ V
    return float(np.linalg.norm(G - np.eye(G.shape[0]), "fro"))


def backward_error(A, b, x, a_norm=None):
    """Normwise backward error ||b - A x|| / (||b|| + ||A|| ||x||)."""
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    r = b - A @ x
    if a_norm is None:
        a_norm = linalg.matrix_2norm(A)
    return float(np.linalg.norm(r) / (np.linalg.norm(b) + a_norm * np.linalg.norm(x)))


def trajectory_map(native_trace, exact_trace, tau=0.1):
    """Map finite-precision CG iterations onto exact-arithmetic ones.

    l(k) = max{i : numerical_rank([v_1 .. v_i], tau) = k} over the computed
    normalized residual directions v_i; ratio1_k compares the finite-precision
    error at l(k) with the exact-arm error at k, ratio2_k = |1 - ratio1_k|.
    k values whose rank level is never attained are returned as NaN, as are
    ratios for k where the exact arm has already reached its final accuracy
    (within a factor of 4 of its eventual minimum): past that point the
    trajectory has terminated and the ratio only compares rounding floors.
    """
    V = native_trace.basis_matrix()
    if V.size == 0:
        raise ValueError("native trace does not retain basis vectors")
    n_iters = min(len(native_trace.a_norm_error) - 1, V.shape[1])
    ranks = np.array([linalg.numerical_rank(V[:, :i + 1], tau) for i in range(V.shape[1])])
    ell = np.full(n_iters + 1, np.nan)
    ratio1 = np.full(n_iters + 1, np.nan)
    exact_err = np.asarray(exact_trace.a_norm_error, dtype=float)
    native_err = np.asarray(native_trace.a_norm_error, dtype=float)
    positive = exact_err[exact_err > 0]
    floor = 4.0 * float(positive.min()) if positive.size else 0.0
    for k in range(1, n_iters + 1):
        hits = np.nonzero(ranks == k)[0]
        if hits.size == 0:
            continue
        lk = int(hits[-1]) + 1  # v_1..v_i is i = index+1 vectors
        ell[k] = lk
        if lk < len(native_err) and k < len(exact_err) and exact_err[k] > floor:
            ratio1[k] = native_err[lk] / exact_err[k]
    ratio2 = np.abs(1.0 - ratio1)
    return ell, ratio1, ratio2


def rescale_x0(A, b, x0):
    """zeta_min = (b^T A x0)/||A x0||^2, the scalar minimizing
    ||b - zeta A x0||; returns (zeta_min, zeta_min * x0)."""
    x0 = np.asarray(x0, dtype=float)
    if not np.any(x0):
        raise ValueError("x0 must be nonzero")
    Ax0 = A @ x0
    denom = float(np.dot(Ax0, Ax0))
    if denom == 0.0:
        raise ValueError("A x0 = 0: cannot rescale")
    zeta = float(np.dot(b, Ax0)) / denom
    return zeta, zeta * x0
