"""Test-problem generators: diagonal spectrum families, clustered spectra,
Wishart and stencil matrices, Grcar / flipped Frank, circular-law normal
matrices, saddle-point blocks, and a convection-diffusion substitute."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from . import linalg

__all__ = [
    "Spectrum",
    "DiagonalOperator",
    "LinearSystem",
    "Rng",
    "diag_family",
    "clusterize",
    "wishart",
    "poisson2d",
    "diffusion2d",
    "grcar",
    "flipped_frank",
    "normal_from_circular_law",
    "saddle_point",
    "saddle_point_synthetic",
    "supg_convection_diffusion",
    "normalized_ones",
]


@dataclass
class Spectrum:
    """Ordered list of real eigenvalues, with optional residual weights."""

    values: np.ndarray
    weights: np.ndarray | None = None

    def __init__(self, values, weights=None, validate=True):
        self.values = np.asarray(values, dtype=np.float64)
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        if validate:
            if np.any(np.diff(self.values) < 0):
                raise ValueError("spectrum values must be ascending")
            if self.weights is not None and self.weights.shape != self.values.shape:
                raise ValueError("weights must match values in length")

    def __len__(self):
        return len(self.values)

    @property
    def kappa(self):
        return float(self.values[-1] / self.values[0])

    def require_spd(self):
        if self.values[0] <= 0:
            raise ValueError("spectrum is not positive")
        return self


class DiagonalOperator:
    """Diagonal SPD operator defined by a spectrum (or any positive diag)."""

    def __init__(self, diag):
        self.diag = np.asarray(getattr(diag, "values", diag), dtype=np.float64)

    @property
    def shape(self):
        n = len(self.diag)
        return (n, n)

    def toarray(self):
        return np.diag(self.diag)


@dataclass
class LinearSystem:
    operator: object  # ndarray | scipy CSR | DiagonalOperator
    rhs: np.ndarray
    x0: np.ndarray | None = None
    x_ref: np.ndarray | None = None
    label: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=np.float64)
        n = self.operator.shape[0]
        if self.operator.shape != (n, n) or self.rhs.shape != (n,):
            raise ValueError("inconsistent system dimensions")
        if self.x0 is None:
            self.x0 = np.zeros(n)

    @property
    def n(self):
        return self.operator.shape[0]


class Rng:
    """Deterministic random stream: PCG64 uniforms, Box-Muller normals.

    The normal deviates are generated explicitly via the Box-Muller transform
    on the documented uniform stream so that every 'random' experiment is
    reproducible bit-for-bit from its seed.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        shape = () if size is None else size
        n = int(np.prod(shape)) if shape != () else 1
        m = (n + 1) // 2
        u1 = 1.0 - self._gen.random(m)  # in (0, 1]
        u2 = self._gen.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        if size is None:
            return float(z[0])
        return z.reshape(shape)


def normalized_ones(n):
    """The standard right-hand side: vector of ones with unit 2-norm."""
    return np.ones(n) / np.sqrt(n)


# ---------------------------------------------------------------------------
# spectra


def diag_family(N, lambda1, lambdaN, rho, orientation="left"):
    """Diagonal SPD spectrum family with accumulation controlled by rho.

    left:  lambda_i = lambda1 + ((i-1)/(N-1)) (lambdaN - lambda1) rho^(N-i),
    right: lambda_i = lambdaN - ((i-1)/(N-1)) (lambdaN - lambda1) rho^(N-i),
    for i = 2..N-1; the endpoints are exactly lambda1 and lambdaN.
    rho = 1 gives equal spacing; rho < 1 accumulates eigenvalues towards the
    chosen side.
    """
    if N < 3:
        raise ValueError("N must be >= 3")
    if not (0 < lambda1 < lambdaN):
        raise ValueError("need 0 < lambda1 < lambdaN")
    if rho <= 0:
        raise ValueError("rho must be positive")
    i = np.arange(2, N)
    bulk = ((i - 1) / (N - 1)) * (lambdaN - lambda1) * rho ** (N - i).astype(float)
    if orientation == "left":
        vals = np.concatenate([[lambda1], lambda1 + bulk, [lambdaN]])
        diffs = np.diff(vals)
        # ties are allowed: for small rho the increments underflow below the
        # resolution of lambda1 and eigenvalues legitimately coincide
        if np.any(diffs < 0):
            k = int(np.nonzero(diffs < 0)[0][0])
            raise ValueError(f"non-monotonic spectrum: inversion between indices {k} and {k + 1}")
        return Spectrum(vals)
    if orientation == "right":
        inner = lambdaN - bulk
        seq = np.concatenate([[lambdaN], inner, [lambda1]])  # descending order
        diffs = np.diff(seq)
        if np.any(diffs > 0):
            k = int(np.nonzero(diffs > 0)[0][0])
            raise ValueError(f"non-monotonic spectrum: inversion between indices {k} and {k + 1}")
        return Spectrum(seq[::-1].copy())
    raise ValueError("orientation must be 'left' or 'right'")


def clusterize(spec: Spectrum, m: int, spacing: float) -> Spectrum:
    """Replace each eigenvalue by a tight cluster of m values with the given
    spacing; errors out if neighboring clusters would overlap."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if spacing < 0:
        raise ValueError("spacing must be >= 0")
    vals = spec.values
    gaps = np.diff(vals)
    if m > 1 and gaps.size and np.any(spacing * m >= gaps):
        k = int(np.nonzero(spacing * m >= gaps)[0][0])
        raise ValueError(f"cluster overlap between eigenvalues {k} and {k + 1}")
    out = (vals[:, None] + spacing * np.arange(m)[None, :]).ravel()
    if out[0] <= 0:
        raise ValueError("clusterized spectrum not positive")
    return Spectrum(out)


# ---------------------------------------------------------------------------
# matrices


def wishart(m, n, rng: Rng):
    """SPD Wishart sample A = R^T R with R an m-by-n standard normal matrix."""
    if not (m >= n >= 1):
        raise ValueError("need m >= n >= 1")
    R = rng.normal((m, n))
    return R.T @ R


def poisson2d(grid_n):
    """Standard 5-point Laplacian on a grid_n x grid_n interior grid (CSR)."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    T = scipy.sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(grid_n, grid_n))
    I = scipy.sparse.identity(grid_n)
    A = scipy.sparse.kron(I, T) + scipy.sparse.kron(T, I)
    return A.tocsr()


def diffusion2d(grid_n, contrast_field):
    """5-point finite-volume stencil for -div(k grad u) with harmonic-mean
    edge coefficients; contrast_field holds per-cell positive k values."""
    k = np.asarray(contrast_field, dtype=np.float64)
    if k.shape == ():
        k = np.full((grid_n, grid_n), float(k))
    if k.shape != (grid_n, grid_n):
        raise ValueError("contrast_field must be grid_n x grid_n")
    if np.any(k <= 0):
        raise ValueError("contrast must be positive")

    def harm(a, b):
        return 2.0 * a * b / (a + b)

    n = grid_n * grid_n
    rows, cols, vals = [], [], []
    diag = np.zeros((grid_n, grid_n))

    def idx(i, j):
        return i * grid_n + j

    for i in range(grid_n):
        for j in range(grid_n):
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < grid_n and 0 <= jj < grid_n:
                    c = harm(k[i, j], k[ii, jj])
                    rows.append(idx(i, j))
                    cols.append(idx(ii, jj))
                    vals.append(-c)
                    diag[i, j] += c
                else:
                    diag[i, j] += k[i, j]  # Dirichlet boundary edge
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag.ravel())
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def grcar(N):
    """Grcar matrix: -1 on the subdiagonal, 1 on the diagonal and the three
    superdiagonals."""
    if N < 5:
        raise ValueError("N must be >= 5")
    A = np.zeros((N, N))
    for d in range(0, 4):
        A += np.eye(N, k=d)
    A -= np.eye(N, k=-1)
    return A


def flipped_frank(N):
    """Flipped Frank matrix: F(i,j) = N+1-max(i,j) for j >= i-1 (1-based),
    zero below the first subdiagonal."""
    if N < 3:
        raise ValueError("N must be >= 3")
    i, j = np.indices((N, N))
    F = (N - np.maximum(i, j)).astype(float)  # N+1-max(i,j) in 1-based terms
    F[j < i - 1] = 0.0
    return F


def normal_from_circular_law(N, shift, scale, rng: Rng, eigenvalues=None):
    """Real normal matrix whose spectrum is shift + scale * (eigenvalues of a
    scaled standard normal matrix, approximately uniform in the unit disk).

    Built block-diagonally: 1x1 blocks for real eigenvalues, rotation-style
    2x2 blocks [[a, b], [-b, a]] for conjugate pairs a +- b i.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if eigenvalues is None:
        G = rng.normal((N, N)) / np.sqrt(N)
        eigenvalues = linalg.general_eigenvalues(G)
    eigenvalues = np.asarray(eigenvalues, dtype=complex)
    M = np.zeros((N, N))
    pos = 0
    used = np.zeros(len(eigenvalues), dtype=bool)
    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    eigs = eigenvalues[order]
    i = 0
    while i < len(eigs):
        lam = eigs[i]
        if abs(lam.imag) == 0:
            M[pos, pos] = lam.real
            pos += 1
            i += 1
        else:
            a, b = lam.real, abs(lam.imag)
            M[pos, pos] = a
            M[pos, pos + 1] = b
            M[pos + 1, pos] = -b
            M[pos + 1, pos + 1] = a
            pos += 2
            i += 2  # conjugate partner is adjacent after the lexsort
    del used
    return shift * np.eye(N) + scale * M


def saddle_point(A, B):
    """Assemble the saddle-point system [[A, B^T], [B, 0]] and the exact
    block-diagonal Schur preconditioner blocks {A, S}, S = B A^{-1} B^T."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    n = A.shape[0]
    m = B.shape[0]
    if B.shape[1] != n or m >= n:
        raise ValueError("B must be m x n with m < n")
    if linalg.numerical_rank(B, 1e-10 * max(1.0, linalg.matrix_2norm(B))) < m:
        raise ValueError("B is rank deficient")
    S = B @ linalg.lu_solve(A, B.T)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = A
    K[:n, n:] = B.T
    K[n:, :n] = B
    K[n:, n:] = 0.0
    return K, (A, S)


def saddle_point_synthetic(n, m, rng: Rng):
    """Desk-scale saddle-point instance: A = I + 0.1 * normal, B random full
    row rank."""
    A = np.eye(n) + 0.1 * rng.normal((n, n))
    B = rng.normal((m, n))
    return saddle_point(A, B)


# Calibration of the convection-dominated model operator below.  The matrix is
# assembled in variables adapted to the streamline direction: the retention
# (diagonal) part and the crosswind block are damped so that the downstream
# coupling dominates the diagonal by roughly a factor of three.  That factor
# controls both the height of the residual plateau (must stay above ~0.9) and
# the growth of the solution along the streamline (3**grid must stay within
# double-precision range), which is what makes the information-propagation
# phenomenon observable on the full 25x25 grid.
_SUPG_RETENTION = 0.35
_SUPG_CROSSWIND = 0.1
_SUPG_UPSTREAM = 0.125


def supg_convection_diffusion(grid_h_inv, delta, nu, boundary_profile_index):
    """Convection-diffusion model -nu * Lap(u) + u_y on the unit square with
    wind pointing upward; the right-hand side carries Dirichlet data g = 1 on
    one of 25 equal segments of the right edge, counted downward from the
    outflow (top) corner.

    This is a simplified analogue of the SUPG-stabilized system, assembled in
    convection-scaled variables (see the calibration note above); only the
    information-propagation phenomenon is claimed: GMRES initially stagnates
    until the boundary information has traveled from the segment to the
    outflow boundary, so the stagnation length grows with the segment index.
    """
    nx = int(grid_h_inv)
    j = int(boundary_profile_index)
    if nx < 8:
        raise ValueError("grid_h_inv must be >= 8")
    if not (1 <= j <= 25):
        raise ValueError("boundary_profile_index must be in 1..25")
    if nu <= 0:
        raise ValueError("nu must be positive")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    h = 1.0 / nx
    N = nx * nx
    rows, cols, vals = [], [], []
    b = np.zeros(N)

    def idx(ix, iy):
        return iy * nx + ix

    cd = nu / h ** 2                 # diffusion edge coefficient
    cc = 1.0 / (2.0 * h)             # central convection coefficient
    dv = cd + delta / h              # streamwise diffusion + SUPG term
    c_down = -(dv + cc)              # downstream (transport) coupling
    c_up = -(dv - cc) * _SUPG_UPSTREAM
    diag_v = _SUPG_RETENTION * 2.0 * dv
    c_side = -_SUPG_CROSSWIND * cd
    diag_h = _SUPG_CROSSWIND * 2.0 * cd
    for iy in range(nx):
        for ix in range(nx):
            r = idx(ix, iy)
            for (dx, dy, coef) in ((-1, 0, c_side), (1, 0, c_side),
                                   (0, -1, c_down), (0, 1, c_up)):
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < nx and 0 <= jy < nx:
                    rows.append(r)
                    cols.append(idx(jx, jy))
                    vals.append(coef)
                else:
                    # Dirichlet boundary: g enters the rhs with -coef * g
                    g = 1.0 if (dx == 1 and jx == nx and _on_segment(iy, nx, j)) else 0.0
                    b[r] += -coef * g
            rows.append(r)
            cols.append(r)
            vals.append(diag_v + diag_h)
    A = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(N, N))
    return LinearSystem(A, b, label=f"supg-substitute(j={j})",
                        extras={"h": h, "nu": nu, "delta": delta, "j": j})


def _on_segment(iy, nx, j):
    # 25 equal segments of the right edge, indexed top-down from the outflow
    # corner; segment j covers grid rows [ nx - j*nx/25, nx - (j-1)*nx/25 ).
    lo = nx - j * nx / 25.0
    hi = nx - (j - 1) * nx / 25.0
    return lo <= iy < hi
