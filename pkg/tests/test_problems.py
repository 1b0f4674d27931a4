import numpy as np
import pytest
import scipy.sparse

from hypothesis import given, settings, strategies as st

from krylovlab import problems
from krylovlab.problems import Rng, Spectrum


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum([3.0, 1.0, 2.0])
    s = Spectrum([1.0, 2.0, 4.0])
    assert s.kappa == 4.0
    with pytest.raises(ValueError):
        Spectrum([-1.0, 2.0]).require_spd()


def test_rng_reproducible():
    a = Rng(42).normal(10)
    b = Rng(42).normal(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, Rng(43).normal(10))


def test_normalized_ones():
    b = problems.normalized_ones(16)
    assert np.linalg.norm(b) == pytest.approx(1.0, rel=1e-15)
    assert np.all(b == b[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=3, max_value=40),
       st.floats(min_value=0.05, max_value=1.0),
       st.sampled_from(["left", "right"]))
def test_diag_family_properties(N, rho, orientation):
    spec = problems.diag_family(N, 0.1, 100.0, rho, orientation)
    assert len(spec) == N
    assert spec.values[0] == 0.1 and spec.values[-1] == 100.0
    assert np.all(np.diff(spec.values) >= 0)


def test_diag_family_accumulation_side():
    left = problems.diag_family(20, 0.1, 100.0, 0.5, "left").values
    right = problems.diag_family(20, 0.1, 100.0, 0.5, "right").values
    # rho < 1 pushes the bulk towards the chosen end of the interval
    assert np.median(left) < 1.0
    assert np.median(right) > 99.0


def test_diag_family_rho_one_equally_spaced():
    spec = problems.diag_family(10, 1.0, 10.0, 1.0).values
    assert np.allclose(np.diff(spec), 1.0, rtol=1e-12)


def test_clusterize():
    base = Spectrum([1.0, 2.0, 3.0])
    c = problems.clusterize(base, 4, 1e-6)
    assert len(c) == 12
    assert np.allclose(c.values[:4], 1.0 + 1e-6 * np.arange(4))
    with pytest.raises(ValueError):
        problems.clusterize(base, 4, 0.5)  # clusters would overlap


def test_wishart_spd_and_shape():
    A = problems.wishart(50, 10, Rng(0))
    assert A.shape == (10, 10)
    assert np.allclose(A, A.T)
    assert np.min(np.linalg.eigvalsh(A)) > 0


def test_poisson2d_eigenvalues():
    # 5-point Laplacian on an n x n interior grid has eigenvalues
    # 4 - 2cos(i pi h) - 2cos(j pi h)
    n = 6
    A = problems.poisson2d(n)
    h = np.pi / (n + 1)
    i, j = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1))
    want = np.sort((4 - 2 * np.cos(i * h) - 2 * np.cos(j * h)).ravel())
    got = np.sort(np.linalg.eigvalsh(A.toarray()))
    assert np.allclose(got, want, rtol=1e-12)


def test_diffusion2d_spd():
    rng = Rng(1)
    field = 1.0 + 9.0 * rng.uniform((8, 8))
    A = problems.diffusion2d(8, field)
    dense = A.toarray()
    assert np.allclose(dense, dense.T, atol=1e-14)
    assert np.min(np.linalg.eigvalsh(dense)) > 0


def test_grcar_structure():
    A = problems.grcar(8)
    dense = A.toarray() if scipy.sparse.issparse(A) else np.asarray(A)
    assert np.all(np.diag(dense) == 1.0)
    assert np.all(np.diag(dense, -1) == -1.0)
    for d in (1, 2, 3):
        assert np.all(np.diag(dense, d) == 1.0)
    assert np.all(np.diag(dense, -2) == 0.0)


def test_flipped_frank_eigenvalues_real_positive():
    A = problems.flipped_frank(16)
    dense = A.toarray() if scipy.sparse.issparse(A) else np.asarray(A)
    lam = np.linalg.eigvals(dense)
    assert np.max(np.abs(lam.imag)) < 1e-8
    assert np.min(lam.real) > 0


def test_normal_from_circular_law_is_normal_with_spectrum():
    rng = Rng(2)
    lam = np.linalg.eigvals(rng.normal((30, 30)) / np.sqrt(30))
    A = problems.normal_from_circular_law(30, 1.0, 0.5, rng, eigenvalues=lam)
    assert np.allclose(A @ A.T, A.T @ A, atol=1e-10)  # normality
    got = np.sort_complex(np.linalg.eigvals(A))
    want = np.sort_complex(1.0 + 0.5 * lam)
    assert np.max(np.abs(got - want)) < 1e-10


def test_saddle_point_synthetic_structure():
    K, (A, S) = problems.saddle_point_synthetic(20, 8, Rng(3))
    assert K.shape == (28, 28)
    assert np.array_equal(K[:20, :20], A)
    assert np.array_equal(K[20:, :20], K[:20, 20:].T)  # B and B^T blocks
    assert np.all(K[20:, 20:] == 0)  # zero (2,2) block
    B = K[20:, :20]
    assert np.allclose(S, B @ np.linalg.solve(A, B.T), rtol=1e-10)


def test_saddle_point_rejects_rank_deficient():
    A = np.eye(6)
    B = np.ones((2, 6))  # rank 1
    with pytest.raises(ValueError):
        problems.saddle_point(A, B)


def test_supg_validation():
    with pytest.raises(ValueError):
        problems.supg_convection_diffusion(4, 0.3, 0.01, 1)
    with pytest.raises(ValueError):
        problems.supg_convection_diffusion(25, 0.3, 0.01, 0)
    with pytest.raises(ValueError):
        problems.supg_convection_diffusion(25, 0.3, -0.01, 1)


def test_supg_rhs_support_moves_with_segment():
    near = problems.supg_convection_diffusion(25, 0.3, 0.01, 1)
    far = problems.supg_convection_diffusion(25, 0.3, 0.01, 25)
    # j counts down from the outflow (top) corner, so j=1 loads the top row
    # block and j=25 the bottom one
    assert np.nonzero(near.rhs)[0].min() > np.nonzero(far.rhs)[0].max()


def test_supg_stagnation_nondecreasing():
    """Residual plateaus last longer the farther the boundary load sits from
    the outflow boundary."""
    from krylovlab import krylov

    lengths = []
    for j in (1, 7, 13, 19, 25):
        system = problems.supg_convection_diffusion(25, 0.3, 0.01, j)
        trace = krylov.gmres(system, tol=1e-4, maxit=120, track_true=False)
        rel = np.asarray(trace.recursive_resnorm) / trace.recursive_resnorm[0]
        high = np.nonzero(rel >= 0.9)[0]
        lengths.append(int(high[-1]) if high.size else 0)
    assert all(a <= b for a, b in zip(lengths, lengths[1:]))
    assert lengths[-1] > lengths[0]
