"""Pixel-lattice graphs and the symmetric normalized adjacency with self-loops."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputError, NumericError
from .numerics import CsrMatrix, from_coo, spmm


class Connectivity(enum.Enum):
    FOUR = "four"
    EIGHT = "eight"

    @property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        if self is Connectivity.FOUR:
            return ((-1, 0), (0, -1), (0, 1), (1, 0))
        return tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0))


@dataclass(frozen=True, eq=False)
class GridGraph:
    """Normalized adjacency over a ``height x width`` lattice, nodes in row-major order."""

    height: int
    width: int
    adjacency: CsrMatrix
    connectivity: Connectivity = Connectivity.EIGHT

    @property
    def n_nodes(self) -> int:
        return self.height * self.width


def build_adjacency(height: int, width: int, connectivity: Connectivity = Connectivity.EIGHT) -> CsrMatrix:
    """Binary symmetric adjacency with zero diagonal; node index is ``y * width + x``.

    Border pixels have fewer neighbours; there is no wraparound.
    """
    if height < 1 or width < 1:
        raise InputError(f"grid dimensions must be positive, got {height}x{width}")
    connectivity = Connectivity(connectivity)
    ys, xs = np.divmod(np.arange(height * width, dtype=np.int64), width)
    src, dst = [], []
    for dy, dx in connectivity.offsets:
        ny, nx = ys + dy, xs + dx
        ok = (ny >= 0) & (ny < height) & (nx >= 0) & (nx < width)
        src.append(ys[ok] * width + xs[ok])
        dst.append(ny[ok] * width + nx[ok])
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    n = height * width
    return from_coo(src, dst, np.ones(src.size), (n, n))


def normalize(a: CsrMatrix) -> CsrMatrix:
    """Return ``D~^-1/2 (A + I) D~^-1/2`` where ``D~`` holds the row sums of ``A + I``.

    Entry ``(i, j)`` equals ``A~_ij / sqrt(d_i * d_j)``, which is exactly symmetric
    because floating-point multiplication commutes.
    """
    if a.rows != a.cols:
        raise InputError(f"adjacency must be square, got {a.shape}")
    n = a.rows
    rows = np.concatenate([a.row_of_entries(), np.arange(n)])
    cols = np.concatenate([a.col_idx, np.arange(n)])
    vals = np.concatenate([a.values, np.ones(n)])
    tilde = from_coo(rows, cols, vals, a.shape)
    degree = np.add.reduceat(tilde.values, tilde.row_ptr[:-1])
    r = tilde.row_of_entries()
    values = tilde.values / np.sqrt(degree[r] * degree[tilde.col_idx])
    return CsrMatrix(n, n, tilde.row_ptr, tilde.col_idx, values)


@lru_cache(maxsize=64)
def grid_graph(height: int, width: int, connectivity: Connectivity = Connectivity.EIGHT) -> GridGraph:
    """Cached normalized grid graph; patches of equal shape share one instance."""
    connectivity = Connectivity(connectivity)
    adj = normalize(build_adjacency(height, width, connectivity))
    return GridGraph(height, width, adj, connectivity)


def max_eigenvalue(a: CsrMatrix, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Dominant eigenvalue of a symmetric matrix by power iteration.

    Iteration stops once the residual ``||A v - lambda v||`` falls below ``tol``.
    """
    if a.rows != a.cols:
        raise InputError(f"matrix must be square, got {a.shape}")
    n = a.rows
    if n == 0:
        raise InputError("empty matrix has no eigenvalues")
    # deterministic start with no special symmetry: 1, 1.01, 1.02, ...
    v = (1.0 + 0.01 * np.arange(n, dtype=np.float64))[:, None]
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = spmm(a, v)
        lam = float(v[:, 0] @ w[:, 0])
        if np.linalg.norm(w - lam * v) < tol:
            return lam
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    raise NumericError(f"power iteration did not converge in {max_iter} iterations (last estimate {lam})")
