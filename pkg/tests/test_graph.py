import itertools

import numpy as np
import pytest

from cropgcn.errors import InputError, NumericError
from cropgcn.graph import Connectivity, build_adjacency, grid_graph, max_eigenvalue, normalize
from cropgcn.numerics import CsrMatrix, from_coo, spmm


def brute_adjacency(h, w, connectivity):
    """Pairwise enumeration of lattice neighbours."""
    n = h * w
    a = np.zeros((n, n))
    for (y0, x0), (y1, x1) in itertools.product(itertools.product(range(h), range(w)), repeat=2):
        dy, dx = abs(y0 - y1), abs(x0 - x1)
        near = max(dy, dx) == 1 if connectivity is Connectivity.EIGHT else dy + dx == 1
        if near:
            a[y0 * w + x0, y1 * w + x1] = 1.0
    return a


def dense_normalized(a):
    tilde = a + np.eye(len(a))
    d = np.diag(tilde.sum(axis=1) ** -0.5)
    return d @ tilde @ d


def torus_adjacency(h, w):
    rows, cols = [], []
    for y, x in itertools.product(range(h), range(w)):
        for dy, dx in itertools.product((-1, 0, 1), repeat=2):
            if (dy, dx) != (0, 0):
                rows.append(y * w + x)
                cols.append(((y + dy) % h) * w + (x + dx) % w)
    return from_coo(rows, cols, np.ones(len(rows)), (h * w, h * w))


def test_singleton_graph():
    a = build_adjacency(1, 1)
    assert a.shape == (1, 1) and a.nnz == 0
    np.testing.assert_array_equal(normalize(a).to_dense(), [[1.0]])


def test_two_node_graph():
    a = build_adjacency(1, 2)
    np.testing.assert_array_equal(a.to_dense(), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(normalize(a).to_dense(), [[0.5, 0.5], [0.5, 0.5]])


def test_three_by_three_degrees():
    deg = build_adjacency(3, 3).to_dense().sum(axis=1).reshape(3, 3)
    assert deg[1, 1] == 8
    assert deg[0, 0] == deg[0, 2] == deg[2, 0] == deg[2, 2] == 3
    assert deg[0, 1] == deg[1, 0] == deg[1, 2] == deg[2, 1] == 5
    a_hat = normalize(build_adjacency(3, 3))
    assert a_hat.to_dense()[4, 4] == pytest.approx(1 / 9, abs=1e-15)


@pytest.mark.parametrize("conn", list(Connectivity))
@pytest.mark.parametrize("h,w", [(1, 1), (1, 4), (2, 3), (4, 4), (5, 2), (5, 5)])
def test_adjacency_matches_enumeration(h, w, conn):
    a = build_adjacency(h, w, conn).to_dense()
    np.testing.assert_array_equal(a, brute_adjacency(h, w, conn))


def test_grid_graph_invariants():
    g = grid_graph(6, 7)
    a = g.adjacency
    dense = a.to_dense()
    np.testing.assert_array_equal(dense, dense.T)
    assert np.all(a.diagonal() > 0)
    assert np.all(a.values > 0)
    per_row = np.diff(a.row_ptr).reshape(6, 7)
    assert np.all(per_row[1:-1, 1:-1] == 9)


def test_eigenpair_identity():
    for h, w in [(3, 3), (4, 6), (1, 5)]:
        a = build_adjacency(h, w)
        a_hat = normalize(a)
        v = np.sqrt(a.to_dense().sum(axis=1) + 1.0)[:, None]
        np.testing.assert_allclose(spmm(a_hat, v), v, rtol=0, atol=1e-13)


def test_torus_regular():
    a_hat = normalize(torus_adjacency(4, 5))
    np.testing.assert_array_equal(np.diff(a_hat.row_ptr), 9)
    np.testing.assert_allclose(a_hat.values, 1 / 9, rtol=0, atol=1e-16)


def test_max_eigenvalue_examples():
    assert max_eigenvalue(CsrMatrix.identity(4)) == pytest.approx(1.0, abs=1e-12)
    half = CsrMatrix.from_dense([[0.5, 0.5], [0.5, 0.5]])
    assert max_eigenvalue(half) == pytest.approx(1.0, abs=1e-9)
    assert max_eigenvalue(grid_graph(4, 4).adjacency) == pytest.approx(1.0, abs=1e-6)


def test_max_eigenvalue_nonconvergence():
    # eigenvalues +1 and -1 tie in magnitude, so power iteration oscillates
    swap = CsrMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(NumericError):
        max_eigenvalue(swap, max_iter=200)


def test_invalid_inputs():
    with pytest.raises(InputError):
        build_adjacency(0, 3)
    with pytest.raises(InputError):
        normalize(CsrMatrix.zeros(2, 3))
