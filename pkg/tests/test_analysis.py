import numpy as np
import pytest
import scipy.optimize

from hypothesis import given, settings, strategies as st

from krylovlab import analysis, krylov, problems
from krylovlab.problems import DiagonalOperator, LinearSystem, Rng, Spectrum


def test_kappa_bound_values():
    assert analysis.kappa_bound(1.0, 5) == 0.0
    assert analysis.kappa_bound(9.0, 1) == pytest.approx(1.0)
    assert analysis.kappa_bound(100.0, 0) == 2.0
    with pytest.raises(ValueError):
        analysis.kappa_bound(0.5, 1)


def test_minmax_two_points():
    # two eigenvalues, k=1: value is (l2 - l1)/(l2 + l1)
    val, active = analysis.minmax_bound(Spectrum([1.0, 3.0]), 1)
    assert val == pytest.approx(0.5, rel=1e-12)
    assert np.allclose(np.sort(active), [1.0, 3.0])


def test_minmax_k_at_grade_is_zero():
    val, _ = analysis.minmax_bound(Spectrum([1.0, 2.0, 5.0]), 3)
    assert val == 0.0


def test_worstcase_formula_examples():
    assert analysis.worstcase_formula([1.0, 3.0]) == pytest.approx(0.5, rel=1e-14)
    # scale invariance
    a = analysis.worstcase_formula([2.0, 5.0, 11.0])
    b = analysis.worstcase_formula([20.0, 50.0, 110.0])
    assert a == pytest.approx(b, rel=1e-13)
    with pytest.raises(ValueError):
        analysis.worstcase_formula([1.0, 1.0, 2.0])


def _lp_minmax(vals, k):
    """LP oracle: min t s.t. -t <= p(lam_i) <= t, p(0) = 1, via the power
    basis on a shifted/scaled variable (only trustworthy for small k and
    well-separated spectra)."""
    vals = np.asarray(vals, dtype=float)
    lo, hi = vals[0], vals[-1]
    t = (2.0 * vals - (lo + hi)) / (hi - lo)
    t0 = (2.0 * 0.0 - (lo + hi)) / (hi - lo)
    V = np.vander(t, k + 1, increasing=True)
    v0 = np.vander(np.array([t0]), k + 1, increasing=True)[0]
    # variables: coeffs c (k+1), bound t ; minimize t
    nv = k + 2
    c_obj = np.zeros(nv)
    c_obj[-1] = 1.0
    A_ub = np.block([[V, -np.ones((len(vals), 1))],
                     [-V, -np.ones((len(vals), 1))]])
    b_ub = np.zeros(2 * len(vals))
    A_eq = np.concatenate([v0, [0.0]]).reshape(1, -1)
    res = scipy.optimize.linprog(c_obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq,
                                 b_eq=[1.0], bounds=[(None, None)] * nv,
                                 method="highs")
    assert res.status == 0
    return res.fun


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6),
       st.integers(min_value=4, max_value=14),
       st.integers(min_value=1, max_value=6))
def test_minmax_matches_lp_oracle(seed, n, k):
    rng = np.random.default_rng(seed)
    vals = np.sort(rng.uniform(1.0, 10.0, size=n))
    span = vals[-1] - vals[0]
    if span <= 0 or np.min(np.diff(vals)) / span <= 1e-4 or k >= n:
        return  # oracle untrustworthy / degenerate
    want = _lp_minmax(vals, k)
    got, _ = analysis.minmax_bound(Spectrum(vals), k)
    assert got == pytest.approx(want, rel=1e-7, abs=1e-10)


def test_bound_chain_on_random_spectra():
    """actual exact-CG error <= minmax bound <= kappa bound, 50 spectra."""
    rng = np.random.default_rng(0)
    for trial in range(50):
        n = int(rng.integers(5, 25))
        vals = np.sort(rng.uniform(0.5, 50.0, size=n))
        vals += 1e-3 * np.arange(n)  # keep them distinct
        spec = Spectrum(vals)
        system = LinearSystem(DiagonalOperator(spec), problems.normalized_ones(n))
        trace = krylov.cg(system, variant="reorthogonalized", tol=0.0, maxit=n)
        err = trace.rel_a_norm_error
        for k in range(1, min(len(err), n)):
            mv, _ = analysis.minmax_bound(spec, k)
            kb = analysis.kappa_bound(spec.kappa, k)
            assert err[k] <= mv * (1 + 1e-8) + 1e-14
            assert mv <= kb * (1 + 1e-12)


def test_worstcase_formula_equals_minmax_on_active_set():
    rng = np.random.default_rng(1)
    for trial in range(20):
        n = int(rng.integers(6, 20))
        vals = np.sort(rng.uniform(1.0, 100.0, size=n))
        if np.min(np.diff(vals)) < 1e-6:
            continue
        k = int(rng.integers(1, min(n - 1, 10)))
        mv, active = analysis.minmax_bound(Spectrum(vals), k)
        if len(active) == k + 1 and mv > 0:
            wc = analysis.worstcase_formula(active)
            assert wc == pytest.approx(mv, rel=1e-8)


def test_bound_report_fields():
    rep = analysis.bound_report(Spectrum([1.0, 2.0, 4.0, 8.0]), 2)
    assert rep.minmax_bound <= rep.kappa_bound * (1 + 1e-12)
    assert rep.worstcase_formula_value == pytest.approx(rep.minmax_bound, rel=1e-8)
    assert len(rep.active_eigenvalues) == 3


def test_ritz_identity_error_reconstruction():
    """The squared A-norm error equals the eigencomponent sum weighted by the
    squared CG polynomial evaluated via its Ritz-value roots."""
    n = 20
    lam = np.linspace(1.0, 30.0, n)
    rng = Rng(5)
    w = rng.normal(n)
    b = w / np.linalg.norm(w)
    system = LinearSystem(DiagonalOperator(Spectrum(lam)), b)
    trace = krylov.cg(system, variant="reorthogonalized", tol=0.0, maxit=8)
    eta = b  # eigenvector components of r0 for a diagonal matrix
    for k in range(1, 7):
        theta = analysis.ritz_values(trace, k).values
        prod = np.prod(1.0 - lam[:, None] / theta[None, :], axis=1)
        want = np.sqrt(np.sum(prod ** 2 * eta ** 2 / lam))
        assert trace.a_norm_error[k] == pytest.approx(want, rel=1e-8)


def test_ritz_values_terminal_step_are_eigenvalues():
    lam = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    system = LinearSystem(DiagonalOperator(Spectrum(lam)), problems.normalized_ones(5))
    trace = krylov.cg(system, variant="reorthogonalized", tol=0.0, maxit=5)
    got = analysis.ritz_values(trace, 5).values
    assert np.allclose(np.sort(got), lam, rtol=1e-10)


def test_harmonic_ritz_residual_polynomial_identity():
    """prod(1 - z/theta_l) applied to r0 reproduces the GMRES residual."""
    rng = Rng(6)
    n = 16
    A = rng.normal((n, n)) + 4.0 * np.eye(n)
    b = rng.normal(n)
    system = LinearSystem(A, b)
    resnorms, V, H = krylov.gmres_with_hessenberg(system, 5)
    for k in range(1, 6):
        theta = analysis.harmonic_ritz(H, k)
        r = b.astype(complex)
        for t in theta:
            r = r - (A @ r) / t
        assert np.linalg.norm(r) == pytest.approx(resnorms[k], rel=1e-6)


def test_disk_bound():
    assert analysis.disk_bound(2.0, 0.5, 14) == pytest.approx(0.25 ** 14, rel=1e-12)
    assert analysis.disk_bound(2.0, 0.5, 0) == 1.0
    with pytest.raises(ValueError):
        analysis.disk_bound(1.0, 1.0, 3)


def test_gmres_spectral_bound_branches():
    val, info = analysis.gmres_spectral_bound(np.array([1.0, 2.0, 4.0]), 1.0, 1)
    assert info["kind"] == "real-minmax"
    val2, info2 = analysis.gmres_spectral_bound(
        np.array([2 + 0.2j, 2 - 0.2j, 2.3 + 0j]), 1.0, 3)
    assert info2["kind"] == "disk-enclosure"
    with pytest.raises(ValueError):
        analysis.gmres_spectral_bound(np.array([0.0, 1.0]), 1.0, 1)


def test_csd_properties():
    f = analysis.csd([1.0, 2.0, 2.0, 5.0])
    xs = np.linspace(0, 6, 100)
    ys = analysis.csd_eval(f, xs)
    assert np.all((ys >= 0) & (ys <= 1))
    assert np.all(np.diff(ys) >= 0)
    assert f(0.5) == 0.0 and f(5.0) == 1.0
    assert f(2.0) == 0.75  # right-continuous, two nodes at 2
    g = analysis.csd([1.0, 2.0, 2.0, 5.0])
    assert analysis.csd_sup_distance(f, g) == 0.0


def test_loss_of_orthogonality():
    Q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((20, 6)))
    assert analysis.loss_of_orthogonality(Q) < 1e-14
    with pytest.raises(ValueError):
        analysis.loss_of_orthogonality(2.0 * Q)


def test_backward_error_exact_solution():
    rng = Rng(7)
    A = rng.normal((10, 10)) + 5 * np.eye(10)
    x = rng.normal(10)
    b = A @ x
    assert analysis.backward_error(A, b, x) < 1e-14


def test_trajectory_map_identity_when_no_delay():
    # well-conditioned problem: rank grows 1 per step, ratios stay near 1
    lam = np.linspace(1.0, 20.0, 25)
    system = LinearSystem(DiagonalOperator(Spectrum(lam)),
                          problems.normalized_ones(25))
    native = krylov.cg(system, tol=0.0, maxit=12, retain_basis=True)
    exact = krylov.cg(system, variant="reorthogonalized", tol=0.0, maxit=12)
    ell, ratio1, ratio2 = analysis.trajectory_map(native, exact)
    valid = ~np.isnan(ratio1)
    assert np.any(valid)
    assert np.allclose(ell[1:8], np.arange(1, 8))
    assert np.all(np.abs(ratio1[valid] - 1.0) < 1e-6)
    assert ratio2[1] <= 1e-12


def test_rescale_x0():
    rng = Rng(8)
    A = rng.normal((12, 12)) + 4 * np.eye(12)
    x = rng.normal(12)
    b = A @ x
    zeta, x0s = analysis.rescale_x0(A, b, x)
    assert zeta == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(x0s, x)
    # b orthogonal to A x0
    y = rng.normal(12)
    Ay = A @ y
    b_perp = b - (b @ Ay) / (Ay @ Ay) * Ay
    zeta2, _ = analysis.rescale_x0(A, b_perp, y)
    assert abs(zeta2) < 1e-12
    with pytest.raises(ValueError):
        analysis.rescale_x0(A, b, np.zeros(12))
