"""Working-precision abstraction.

Two modes are supported everywhere a solver takes a ``mode`` argument:

* ``NATIVE``  -- IEEE double precision (numpy float64),
* ``EXTENDED`` -- double-double pair arithmetic (~31 decimal digits), used to
  simulate exact arithmetic in the experiments that contrast "mathematical"
  and "computational" behavior.

The extended representation stores a value as an unevaluated sum ``hi + lo``
with ``|lo| <= ulp(hi)/2``.  All elementary operations are built from
error-free transformations (two_sum / Dekker two_prod) and are deterministic:
identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PrecisionMode",
    "NATIVE",
    "EXTENDED",
    "NumericRangeError",
    "DDArray",
    "dd",
    "dd_sum",
    "dd_dot",
    "dd_norm",
    "dd_sqrt",
    "dd_solve",
    "extended_arithmetic",
    "vdot",
    "vnorm",
    "ssqrt",
    "sfloat",
    "promote",
]

_SPLITTER = 134217729.0  # 2**27 + 1


class NumericRangeError(ArithmeticError):
    """Overflow/underflow to inf/zero, or NaN crossing a trace boundary."""


@dataclass(frozen=True)
class PrecisionMode:
    kind: str
    unit_roundoff: float

    def __repr__(self):
        return f"PrecisionMode({self.kind!r})"

    @property
    def is_extended(self):
        return self.kind == "extended"


NATIVE = PrecisionMode("native", 2.0 ** -53)
# 4*u^2 for the pair format; see DDArray operation error bounds.
EXTENDED = PrecisionMode("extended", 4.0 * (2.0 ** -53) ** 2)


# ---------------------------------------------------------------------------
# error-free transformations (all vectorized over ndarrays)

def two_sum(a, b):
    """s + err == a + b exactly, s = fl(a + b)."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    """two_sum specialization assuming |a| >= |b|."""
    s = a + b
    err = b - (s - a)
    return s, err


def _split(a):
    c = _SPLITTER * a
    big = c - a
    hi = c - big
    return hi, a - hi


def two_prod(a, b):
    """p + err == a * b exactly (Dekker splitting, no FMA required)."""
    p = a * b
    ahi, alo = _split(a)
    bhi, blo = _split(b)
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


# ---------------------------------------------------------------------------
# double-double arrays


class DDArray:
    """numpy-array-shaped double-double values (pair of float64 arrays).

    Supports elementwise +, -, *, /, matmul, slicing and assignment.  Scalars
    are represented as 0-d arrays.
    """

    __slots__ = ("hi", "lo")

    def __init__(self, hi, lo=None):
        self.hi = np.asarray(hi, dtype=np.float64)
        if lo is None:
            self.lo = np.zeros_like(self.hi)
        else:
            self.lo = np.asarray(lo, dtype=np.float64)
            if self.lo.shape != self.hi.shape:
                self.lo = np.broadcast_to(self.lo, self.hi.shape).copy()

    # -- construction / conversion

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))

    def to_native(self):
        return self.hi + self.lo

    def copy(self):
        return DDArray(self.hi.copy(), self.lo.copy())

    @property
    def shape(self):
        return self.hi.shape

    @property
    def ndim(self):
        return self.hi.ndim

    @property
    def size(self):
        return self.hi.size

    @property
    def T(self):
        return DDArray(self.hi.T, self.lo.T)

    def reshape(self, *shape):
        return DDArray(self.hi.reshape(*shape), self.lo.reshape(*shape))

    def ravel(self):
        return DDArray(self.hi.ravel(), self.lo.ravel())

    def __len__(self):
        return len(self.hi)

    def __float__(self):
        if self.hi.size != 1:
            raise TypeError("only 0-d/1-element DDArray converts to float")
        return float(self.hi) + float(self.lo)

    def __repr__(self):
        return f"DDArray(hi={self.hi!r}, lo={self.lo!r})"

    def __getitem__(self, idx):
        return DDArray(self.hi[idx], self.lo[idx])

    def __setitem__(self, idx, value):
        value = dd(value)
        self.hi[idx] = value.hi
        self.lo[idx] = value.lo

    # -- arithmetic

    def __neg__(self):
        return DDArray(-self.hi, -self.lo)

    def __add__(self, other):
        other = dd(other)
        s, e = two_sum(self.hi, other.hi)
        t, f = two_sum(self.lo, other.lo)
        e = e + t
        s, e = quick_two_sum(s, e)
        e = e + f
        hi, lo = quick_two_sum(s, e)
        return DDArray(hi, lo)

    __radd__ = __add__

    def __sub__(self, other):
        return self.__add__(-dd(other))

    def __rsub__(self, other):
        return (-self).__add__(dd(other))

    def __mul__(self, other):
        other = dd(other)
        p, e = two_prod(self.hi, other.hi)
        e = e + (self.hi * other.lo + self.lo * other.hi)
        hi, lo = quick_two_sum(p, e)
        return DDArray(hi, lo)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = dd(other)
        with np.errstate(divide="raise", invalid="raise"):
            q1 = self.hi / other.hi
        r = self - other * DDArray(q1)
        q2 = r.hi / other.hi
        r = r - other * DDArray(q2)
        q3 = r.hi / other.hi
        s, e = two_sum(q1, q2)
        e = e + q3
        hi, lo = quick_two_sum(s, e)
        return DDArray(hi, lo)

    def __rtruediv__(self, other):
        return dd(other).__truediv__(self)

    def __matmul__(self, other):
        other = dd(other)
        if self.ndim == 2 and other.ndim == 1:
            return _dd_matvec(self, other)
        if self.ndim == 2 and other.ndim == 2:
            cols = [_dd_matvec(self, other[:, j]) for j in range(other.shape[1])]
            out = DDArray.zeros((self.shape[0], other.shape[1]))
            for j, c in enumerate(cols):
                out[:, j] = c
            return out
        if self.ndim == 1 and other.ndim == 2:
            return _dd_matvec(other.T, self)
        raise ValueError("unsupported matmul operand shapes")

    # -- comparisons (elementwise, on the represented values)

    def _cmp(self, other):
        d = self - dd(other)
        return d.hi + d.lo

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def abs(self):
        neg = (self.hi + self.lo) < 0
        sign = np.where(neg, -1.0, 1.0)
        return DDArray(self.hi * sign, self.lo * sign)


def dd(x) -> DDArray:
    """Promote a scalar/ndarray to DDArray (no-op for DDArray inputs)."""
    if isinstance(x, DDArray):
        return x
    return DDArray(np.asarray(x, dtype=np.float64))


def dd_sum(x: DDArray, axis: int = -1) -> DDArray:
    """Sum along an axis with a binary-tree fold (each node a dd add)."""
    x = dd(x)
    hi = np.moveaxis(x.hi, axis, -1).copy()
    lo = np.moveaxis(x.lo, axis, -1).copy()
    a = DDArray(hi, lo)
    while a.shape[-1] > 1:
        n = a.shape[-1]
        if n % 2:
            pad = [(0, 0)] * (a.ndim - 1) + [(0, 1)]
            a = DDArray(np.pad(a.hi, pad), np.pad(a.lo, pad))
        a = a[..., 0::2] + a[..., 1::2]
    return a[..., 0]


def dd_dot(x, y) -> DDArray:
    """Inner product in pair arithmetic (exact products, dd accumulation)."""
    x, y = dd(x), dd(y)
    p, e = two_prod(x.hi, y.hi)
    e = e + (x.hi * y.lo + x.lo * y.hi + x.lo * y.lo)
    s, e = two_sum(p, e)
    return dd_sum(DDArray(s, e), axis=-1)


def _dd_matvec(A: DDArray, x: DDArray) -> DDArray:
    p, e = two_prod(A.hi, x.hi[None, :])
    e = e + (A.hi * x.lo[None, :] + A.lo * x.hi[None, :] + A.lo * x.lo[None, :])
    s, e = two_sum(p, e)
    return dd_sum(DDArray(s, e), axis=-1)


def dd_norm(x) -> DDArray:
    return dd_sqrt(dd_dot(x, x))


def dd_sqrt(a) -> DDArray:
    """Square root: native estimate plus one dd Newton correction."""
    a = dd(a)
    if np.any(a.hi + a.lo < 0):
        raise NumericRangeError("sqrt of negative value")
    s = np.sqrt(a.hi)
    res = a - DDArray(s) * DDArray(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(s > 0, res.hi / (2.0 * s), 0.0)
    hi, lo = two_sum(s, corr)
    hi, lo = quick_two_sum(hi, lo)
    return DDArray(hi, lo)


def dd_solve(A: DDArray, B) -> DDArray:
    """Solve A X = B by LU with partial pivoting, entirely in pair arithmetic.

    A must be square; B may be a vector or a matrix.  Raises
    NumericRangeError on a zero pivot.
    """
    A = dd(A).copy()
    B = dd(B).copy()
    n = A.shape[0]
    vec = B.ndim == 1
    if vec:
        B = B.reshape(n, 1)
    for k in range(n):
        col = np.abs(A.hi[k:, k] + A.lo[k:, k])
        p = k + int(np.argmax(col))
        if col[p - k] == 0.0:
            raise NumericRangeError(f"singular matrix in dd_solve (pivot {k})")
        if p != k:
            for arr in (A.hi, A.lo, B.hi, B.lo):
                arr[[k, p]] = arr[[p, k]]
        if k + 1 < n:
            f = A[k + 1:, k] / A[k, k]
            A[k + 1:, k + 1:] = A[k + 1:, k + 1:] - f.reshape(-1, 1) * A[k, k + 1:].reshape(1, -1)
            B[k + 1:, :] = B[k + 1:, :] - f.reshape(-1, 1) * B[k, :].reshape(1, -1)
    X = DDArray.zeros((n, B.shape[1]))
    for k in range(n - 1, -1, -1):
        acc = B[k, :]
        if k + 1 < n:
            prod = A[k, k + 1:].reshape(-1, 1) * X[k + 1:, :]
            acc = acc - dd_sum(prod, axis=0)
        X[k, :] = acc / A[k, k]
    return X[:, 0] if vec else X


def extended_arithmetic(a, b, op: str) -> DDArray:
    """Single extended-precision scalar operation with range checking.

    op is one of '+', '-', '*', '/', 'sqrt' (for 'sqrt', b is ignored).
    """
    a = dd(a)
    if not np.all(np.isfinite(a.hi)):
        raise NumericRangeError("non-finite operand")
    if op == "sqrt":
        out = dd_sqrt(a)
    else:
        b = dd(b)
        if not np.all(np.isfinite(b.hi)):
            raise NumericRangeError("non-finite operand")
        if op == "+":
            out = a + b
        elif op == "-":
            out = a - b
        elif op == "*":
            out = a * b
        elif op == "/":
            if np.any((b.hi + b.lo) == 0):
                raise NumericRangeError("division by zero")
            out = a / b
        else:
            raise ValueError(f"unknown op {op!r}")
    if not np.all(np.isfinite(out.hi)):
        raise NumericRangeError("overflow in extended arithmetic")
    return out


# ---------------------------------------------------------------------------
# mode-generic helpers used by the solvers


def promote(x, mode: PrecisionMode):
    """Bring an array into the representation of the given mode."""
    if mode.is_extended:
        return dd(x)
    return x.to_native() if isinstance(x, DDArray) else np.asarray(x, dtype=np.float64)


def vdot(x, y):
    if isinstance(x, DDArray) or isinstance(y, DDArray):
        return dd_dot(x, y)
    return float(np.dot(x, y))


def vnorm(x):
    if isinstance(x, DDArray):
        return dd_norm(x)
    return float(np.linalg.norm(x))


def ssqrt(s):
    if isinstance(s, DDArray):
        return dd_sqrt(s)
    return float(np.sqrt(s))


def sfloat(s):
    """Python float view of a scalar in either mode."""
    if isinstance(s, DDArray):
        return float(s)
    return float(s)
