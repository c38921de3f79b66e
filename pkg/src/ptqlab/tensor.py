"""Dense real-matrix kernels.

Matrices are plain 2-D numpy arrays. Public helpers default to float32
storage; ``cholesky`` and ``inverse_spd`` preserve float64 inputs so the
GPTQ sweep can factor its Hessian at full precision.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "DecompositionError",
    "as_matrix",
    "matmul",
    "cholesky",
    "inverse_spd",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DecompositionError(ArithmeticError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(
            f"matrix is not positive definite: pivot {pivot} is {value:.6g}"
        )


def as_matrix(data, dtype=np.float32) -> np.ndarray:
    """Return ``data`` as a contiguous 2-D array of ``dtype``."""
    m = np.ascontiguousarray(data, dtype=dtype)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    dtype = np.result_type(a.dtype, b.dtype, np.float32)
    return np.matmul(a.astype(dtype, copy=False), b.astype(dtype, copy=False))


def _float_dtype(a: np.ndarray):
    return np.float64 if a.dtype == np.float64 else np.float32


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Column-by-column (left-looking) factorization accumulated in float64.
    Raises :class:`DecompositionError` naming the first non-positive pivot.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"cholesky needs a square matrix, got {a.shape}")
    out_dtype = _float_dtype(a)
    a64 = a.astype(np.float64)
    if not np.allclose(a64, a64.T, rtol=0.0, atol=1e-5 * max(1.0, np.abs(a64).max(initial=0.0))):
        raise ShapeError("cholesky needs a symmetric matrix")
    n = a64.shape[0]
    L = np.zeros_like(a64)
    for j in range(n):
        row = L[j, :j]
        d = a64[j, j] - row @ row
        if not d > 0.0:
            raise DecompositionError(j, float(d))
        ljj = np.sqrt(d)
        L[j, j] = ljj
        if j + 1 < n:
            L[j + 1 :, j] = (a64[j + 1 :, j] - L[j + 1 :, :j] @ row) / ljj
    return L.astype(out_dtype)


def _solve_lower(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    # forward substitution, one row at a time
    n = L.shape[0]
    Y = np.zeros_like(B)
    for i in range(n):
        Y[i] = (B[i] - L[i, :i] @ Y[:i]) / L[i, i]
    return Y


def _solve_upper(U: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = U.shape[0]
    Y = np.zeros_like(B)
    for i in range(n - 1, -1, -1):
        Y[i] = (B[i] - U[i, i + 1 :] @ Y[i + 1 :]) / U[i, i]
    return Y


def inverse_spd(a) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via its Cholesky factor."""
    a = np.asarray(a)
    out_dtype = _float_dtype(a)
    L = cholesky(a.astype(np.float64)).astype(np.float64)
    n = L.shape[0]
    Y = _solve_lower(L, np.eye(n))
    inv = _solve_upper(L.T, Y)
    inv = 0.5 * (inv + inv.T)
    return inv.astype(out_dtype)
