"""Symmetric tridiagonal matrices, test-matrix generators and accuracy metrics."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

#: Largest order the dense oracle accepts unless overridden.
ORACLE_MAX_N = 4096


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix stored as its diagonal and off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float).reshape(-1)
        offdiag = np.array(self.offdiag, dtype=float).reshape(-1)
        if diag.size < 1:
            raise ValueError("matrix order must be positive")
        if offdiag.size != diag.size - 1:
            raise ValueError(
                f"offdiag must have length {diag.size - 1}, got {offdiag.size}"
            )
        if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(offdiag))):
            raise ValueError("entries must be finite")
        diag.flags.writeable = False
        offdiag.flags.writeable = False
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)

    @property
    def n(self) -> int:
        return self.diag.size

    def to_dense(self) -> np.ndarray:
        t = np.diag(self.diag)
        if self.n > 1:
            i = np.arange(self.n - 1)
            t[i, i + 1] = self.offdiag
            t[i + 1, i] = self.offdiag
        return t

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Return T @ x for a vector or a matrix of column vectors."""
        x = np.asarray(x, dtype=float)
        y = self.diag.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        if self.n > 1:
            e = self.offdiag.reshape((-1,) + (1,) * (x.ndim - 1))
            y[:-1] += e * x[1:]
            y[1:] += e * x[:-1]
        return y


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.shape != (values.size, values.size):
            raise ValueError("vectors must be n x n with n = len(values)")
        if values.size > 1 and np.any(np.diff(values) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "vectors", vectors)


@dataclass(frozen=True)
class AccuracyReport:
    orthogonality: float
    residual: float
    norm2: float = field(default=float("nan"))


def make_clement(n: int) -> TridiagonalMatrix:
    """Clement-type matrix with off-diagonals sqrt(i*(n+1-i)), i = 1..n.

    The index range yields a matrix of order ``n + 1`` whose eigenvalues are
    -n, -n+2, ..., n.
    """
    if n < 1:
        raise ValueError("make_clement needs n >= 1")
    i = np.arange(1, n + 1, dtype=float)
    return TridiagonalMatrix(np.zeros(n + 1), np.sqrt(i * (n + 1 - i)))


def make_hermite(n: int) -> TridiagonalMatrix:
    """Hermite-type matrix of order n: zero diagonal, off-diagonals sqrt(i)."""
    if n < 2:
        raise ValueError("make_hermite needs n >= 2")
    return TridiagonalMatrix(np.zeros(n), np.sqrt(np.arange(1, n, dtype=float)))


def make_toeplitz_type(n: int) -> TridiagonalMatrix:
    """Toeplitz-type matrix tridiag(1, 2, 1) of order n."""
    if n < 2:
        raise ValueError("make_toeplitz_type needs n >= 2")
    return TridiagonalMatrix(np.full(n, 2.0), np.ones(n - 1))


def sht_c(l, m):
    l = np.asarray(l, dtype=float)
    xi = l - m
    num = (xi + 1) * (xi + 2) * (l + m + 1) * (l + m + 2)
    den = (2 * l + 1) * (2 * l + 3) ** 2 * (2 * l + 5)
    return np.sqrt(num / den)


def sht_d(l, m):
    l = np.asarray(l, dtype=float)
    return (2 * l * (l + 1) - 2.0 * m * m - 1) / ((2 * l - 1) * (2 * l + 3))


def make_sht(n: int, m: int | None = None) -> TridiagonalMatrix:
    """Tridiagonal matrix from the spherical harmonic transform.

    Rows are indexed j = 0..n-1 with diagonal d_{m+2j} and off-diagonal
    c_{m+2j}. ``m`` defaults to ``n``.
    """
    if n < 2:
        raise ValueError("make_sht needs n >= 2")
    if m is None:
        m = n
    if m < 0:
        raise ValueError("m must be nonnegative")
    l = m + 2 * np.arange(n)
    return TridiagonalMatrix(sht_d(l, m), sht_c(l[:-1], m))


MATRIX_FAMILIES = {
    "clement": lambda n: make_clement(n - 1),
    "hermite": make_hermite,
    "toeplitz": make_toeplitz_type,
    "sht": make_sht,
}


def make_matrix(family: str, n: int, m: int | None = None) -> TridiagonalMatrix:
    """Build a test matrix of order ``n`` by family name."""
    if family == "sht":
        return make_sht(n, m)
    try:
        return MATRIX_FAMILIES[family](n)
    except KeyError:
        raise ValueError(f"unknown matrix family {family!r}") from None


def dense_eig_oracle(t: TridiagonalMatrix, max_n: int = ORACLE_MAX_N) -> EigenDecomposition:
    """Full eigendecomposition with LAPACK's tridiagonal QL/QR (``dstev``)."""
    if t.n > max_n:
        raise ValueError(f"oracle limited to n <= {max_n}, got {t.n}")
    if t.n == 1:
        return EigenDecomposition(t.diag.copy(), np.ones((1, 1)))
    w, q = scipy.linalg.eigh_tridiagonal(
        t.diag, t.offdiag, lapack_driver="stev", check_finite=False
    )
    return EigenDecomposition(w, q)


def orthogonality(q: np.ndarray) -> float:
    """Return max |I - Q Q^T|."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("orthogonality needs a square matrix")
    e = q @ q.T
    e[np.diag_indices_from(e)] -= 1.0
    return float(np.abs(e).max()) if e.size else 0.0


def residual(t: TridiagonalMatrix, e: EigenDecomposition, norm2: float | None = None) -> float:
    """Return max_j ||(T - Q diag(lam) Q^T)[:, j]||_2 / ||T||_2.

    ``norm2`` defaults to max |lam| of ``e`` itself. A zero matrix gives 0.
    """
    if e.vectors.shape[0] != t.n:
        raise ValueError("dimension mismatch between matrix and decomposition")
    if norm2 is None:
        norm2 = float(np.abs(e.values).max())
    r = t.to_dense() - (e.vectors * e.values) @ e.vectors.T
    cols = np.sqrt(np.einsum("ij,ij->j", r, r))
    top = float(cols.max())
    if norm2 == 0.0:
        return 0.0 if top == 0.0 else math.inf
    return top / norm2


def accuracy(t: TridiagonalMatrix, e: EigenDecomposition) -> AccuracyReport:
    norm2 = float(np.abs(e.values).max())
    return AccuracyReport(orthogonality(e.vectors), residual(t, e, norm2), norm2)


def write_tridiagonal(path: str | os.PathLike, t: TridiagonalMatrix) -> None:
    def fmt(xs):
        return " ".join(f"{x:.17g}" for x in xs)

    with open(path, "w") as fh:
        fh.write(f"{t.n}\n{fmt(t.diag)}\n{fmt(t.offdiag)}\n")


def read_tridiagonal(path: str | os.PathLike) -> TridiagonalMatrix:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines()]
    if not lines:
        raise ValueError(f"{path}: empty tridiagonal file")
    n = int(lines[0].strip())
    diag = np.array(lines[1].split() if len(lines) > 1 else [], dtype=float)
    offdiag = np.array(lines[2].split() if len(lines) > 2 else [], dtype=float)
    if diag.size != n:
        raise ValueError(f"{path}: expected {n} diagonal entries, got {diag.size}")
    return TridiagonalMatrix(diag, offdiag)
