"""Dense and compressed-sparse-row kernels with a fixed summation order.

Dense matrices are plain 2-D ``float64`` numpy arrays. Sparse matrices use
:class:`CsrMatrix`. Every product accumulates each output element over the
shared index in ascending order, starting from ``0.0``. The results are
therefore bit-identical to a naive triple loop and do not depend on the
number of threads. Row-parallel kernels assign each output row to exactly
one worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .errors import DataError, InputError

# The bundled TBB is often too old; try OpenMP first to avoid a noisy fallback warning.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(parallel=True, cache=True)
def _gemm_kernel(a, b):
    n, m = a.shape
    p = b.shape[1]
    out = np.zeros((n, p))
    for i in prange(n):
        for k in range(m):
            aik = a[i, k]
            for j in range(p):
                out[i, j] += aik * b[k, j]
    return out


@njit(parallel=True, cache=True)
def _gemm_tn_kernel(a, b):
    # out = a.T @ b; k is blocked so a slab of b stays in cache, each output
    # element still sums k in ascending order
    m, n = a.shape
    p = b.shape[1]
    out = np.zeros((n, p))
    block = 256
    for k0 in range(0, m, block):
        k1 = min(k0 + block, m)
        for i in prange(n):
            for k in range(k0, k1):
                aki = a[k, i]
                for j in range(p):
                    out[i, j] += aki * b[k, j]
    return out


@njit(parallel=True, cache=True)
def _spmm_kernel(row_ptr, col_idx, values, b, n_rows):
    p = b.shape[1]
    out = np.zeros((n_rows, p))
    for i in prange(n_rows):
        for jj in range(row_ptr[i], row_ptr[i + 1]):
            k = col_idx[jj]
            v = values[jj]
            for j in range(p):
                out[i, j] += v * b[k, j]
    return out


def set_threads(n: int) -> None:
    """Set the worker count used by the row-parallel kernels."""
    if n < 1:
        raise InputError(f"thread count must be >= 1, got {n}")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def as_dense(x, name: str = "matrix") -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 2-D array, rejecting non-finite entries."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains NaN or infinite entries")
    return arr


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Canonical CSR matrix: sorted, duplicate-free column indices in each row."""

    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.rows < 0 or self.cols < 0:
            raise InputError(f"negative shape ({self.rows}, {self.cols})")
        if row_ptr.shape != (self.rows + 1,):
            raise InputError(f"row_ptr must have length {self.rows + 1}, got {row_ptr.shape}")
        if row_ptr[0] != 0 or np.any(np.diff(row_ptr) < 0):
            raise InputError("row_ptr must start at 0 and be non-decreasing")
        nnz = int(row_ptr[-1])
        if col_idx.shape != (nnz,) or values.shape != (nnz,):
            raise InputError(f"col_idx and values must have length nnz={nnz}")
        if nnz and (col_idx.min() < 0 or col_idx.max() >= self.cols):
            raise InputError("column index out of range")
        if nnz > 1:
            owner = np.repeat(np.arange(self.rows), np.diff(row_ptr))
            same_row = owner[1:] == owner[:-1]
            if np.any(same_row & (np.diff(col_idx) <= 0)):
                raise InputError("column indices must be strictly increasing within each row")
        if not np.isfinite(values).all():
            raise DataError("CSR values contain NaN or infinite entries")
        for name, arr in (("row_ptr", row_ptr), ("col_idx", col_idx), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_of_entries(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.row_ptr))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row_of_entries(), self.col_idx] = self.values
        return out

    def transpose(self) -> CsrMatrix:
        return from_coo(self.col_idx, self.row_of_entries(), self.values, (self.cols, self.rows))

    def diagonal(self) -> np.ndarray:
        n = min(self.rows, self.cols)
        diag = np.zeros(n)
        r = self.row_of_entries()
        on = (r == self.col_idx) & (r < n)
        diag[r[on]] = self.values[on]
        return diag

    @classmethod
    def from_dense(cls, dense, tol: float = 0.0) -> CsrMatrix:
        d = as_dense(dense, "dense")
        r, c = np.nonzero(np.abs(d) > tol)
        return from_coo(r, c, d[r, c], d.shape)

    @classmethod
    def identity(cls, n: int) -> CsrMatrix:
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> CsrMatrix:
        empty = np.zeros(0, dtype=np.int64)
        return cls(rows, cols, np.zeros(rows + 1, dtype=np.int64), empty, np.zeros(0))


def from_coo(rows, cols, values, shape) -> CsrMatrix:
    """Build a canonical CSR matrix from coordinate triples; duplicates are summed."""
    n_rows, n_cols = (int(s) for s in shape)
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    if not (rows.shape == cols.shape == values.shape):
        raise InputError("coordinate arrays must have equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise InputError(f"coordinates out of range for shape {shape}")
    if not np.isfinite(values).all():
        raise DataError("COO values contain NaN or infinite entries")
    order = np.lexsort((cols, rows))
    rows, cols, values = rows[order], cols[order], values[order]
    if rows.size:
        first = np.ones(rows.size, dtype=bool)
        first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        group = np.cumsum(first) - 1
        summed = np.zeros(int(group[-1]) + 1)
        # np.add.at accumulates in index order, keeping duplicate sums deterministic
        np.add.at(summed, group, values)
        rows, cols, values = rows[first], cols[first], summed
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
    return CsrMatrix(n_rows, n_cols, row_ptr, cols, values)


def canonicalize(a: CsrMatrix) -> CsrMatrix:
    """Return ``a`` rebuilt through :func:`from_coo`; idempotent on canonical input."""
    return from_coo(a.row_of_entries(), a.col_idx, a.values, a.shape)


def gemm(a, b) -> np.ndarray:
    """Dense product ``a @ b`` with ascending-index accumulation."""
    a = as_dense(a, "a")
    b = as_dense(b, "b")
    if a.shape[1] != b.shape[0]:
        raise InputError(f"gemm dimension mismatch: {a.shape} x {b.shape}")
    return _gemm_kernel(a, b)


def transpose_gemm(a, b) -> np.ndarray:
    """Dense product ``a.T @ b`` without materializing the transpose."""
    a = as_dense(a, "a")
    b = as_dense(b, "b")
    if a.shape[0] != b.shape[0]:
        raise InputError(f"transpose_gemm dimension mismatch: {a.shape}^T x {b.shape}")
    return _gemm_tn_kernel(a, b)


def spmm(a: CsrMatrix, b) -> np.ndarray:
    """Sparse-dense product ``a @ b``."""
    b = as_dense(b, "b")
    if a.cols != b.shape[0]:
        raise InputError(f"spmm dimension mismatch: {a.shape} x {b.shape}")
    return _spmm_kernel(a.row_ptr, a.col_idx, a.values, b, a.rows)


def transpose_spmm(a: CsrMatrix, b) -> np.ndarray:
    """Product ``a.T @ b`` without densifying ``a``."""
    b = as_dense(b, "b")
    if a.rows != b.shape[0]:
        raise InputError(f"transpose_spmm dimension mismatch: {a.shape}^T x {b.shape}")
    return spmm(a.transpose(), b)
