"""Sparse containers, block systems, direct/iterative solvers."""

import numpy as np
import pytest
import scipy.sparse as sp

from mbfem.errors import DimensionMismatch, SingularMatrix
from mbfem.linalg import (BlockSystem, Factorized, SparseMatrix, solve_direct,
                          solve_iterative)


def _random_spd(n, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return sp.csr_matrix(A @ A.T + n * np.eye(n))


def test_triplets_sum_duplicates():
    m = SparseMatrix(2, 2, rows=[0, 0, 1], cols=[0, 0, 1], values=[1.0, 2.0, 5.0])
    assert np.allclose(m.toarray(), [[3.0, 0.0], [0.0, 5.0]])


def test_triplet_out_of_range_rejected():
    with pytest.raises(DimensionMismatch):
        SparseMatrix(2, 2, rows=[2], cols=[0], values=[1.0])


def test_solve_direct_matches_dense():
    A = _random_spd(40)
    rng = np.random.default_rng(1)
    b = rng.standard_normal(40)
    x = solve_direct((A, b))
    assert np.allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-9)


def test_solve_direct_singular_raises():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularMatrix):
        solve_direct((A, np.array([1.0, 0.0])))


def test_factorized_reuse():
    A = _random_spd(30, seed=2)
    lu = Factorized(A)
    rng = np.random.default_rng(3)
    for _ in range(3):
        b = rng.standard_normal(30)
        assert np.allclose(A @ lu.solve(b), b, atol=1e-9)


def test_solve_iterative_spd():
    A = _random_spd(50, seed=4)
    b = np.ones(50)
    x = solve_iterative((A, b), tol=1e-12)
    assert np.allclose(A @ x, b, atol=1e-8)


def test_block_system_matches_manual_bmat():
    A = _random_spd(10, seed=5)
    B = sp.random(10, 6, density=0.4, random_state=6, format="csr")
    C = _random_spd(6, seed=7)
    rhs1, rhs2 = np.ones(10), np.full(6, 2.0)
    system = BlockSystem([[A, B], [B.T, C]], [rhs1, rhs2])
    x = solve_direct(system)
    full = sp.bmat([[A, B], [B.T, C]]).toarray()
    assert np.allclose(x, np.linalg.solve(full, np.concatenate([rhs1, rhs2])),
                       atol=1e-8)


def test_block_system_shape_checks():
    A = _random_spd(4)
    with pytest.raises(DimensionMismatch):
        BlockSystem([[A, None], [None, None]], [np.ones(4), np.ones(3)])
