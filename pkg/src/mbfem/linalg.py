"""Sparse linear algebra for assembled systems, including indefinite saddle-point blocks.

Everything is backed by scipy.sparse; the thin wrappers exist so that assembly
code works with triplets and block layouts without caring about storage details.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NoConvergence, SingularMatrix


class SparseMatrix:
    """A finalized sparse matrix built from (row, col, value) triplets.

    Duplicate entries are summed at finalization; insertion order is
    immaterial. Instances are immutable once constructed.
    """

    def __init__(self, n_rows, n_cols, rows=None, cols=None, values=None, csr=None):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        if csr is not None:
            if csr.shape != (self.n_rows, self.n_cols):
                raise DimensionMismatch(
                    f"matrix shape {csr.shape} != declared ({n_rows}, {n_cols})"
                )
            self._csr = csr.tocsr()
        else:
            rows = np.asarray(rows, dtype=np.int64)
            cols = np.asarray(cols, dtype=np.int64)
            values = np.asarray(values, dtype=np.float64)
            if rows.size and (rows.max() >= n_rows or cols.max() >= n_cols):
                raise DimensionMismatch("triplet index out of declared range")
            coo = sp.coo_matrix((values, (rows, cols)), shape=(n_rows, n_cols))
            self._csr = coo.tocsr()
            self._csr.sum_duplicates()

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        mat = sp.csr_matrix(mat)
        return cls(mat.shape[0], mat.shape[1], csr=mat)

    @classmethod
    def identity(cls, n) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    def scipy(self) -> sp.csr_matrix:
        return self._csr

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix.from_scipy(self._csr @ other._csr)
        return self._csr @ np.asarray(other)

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self._csr.T)

    def toarray(self):
        return self._csr.toarray()

    def dump_matrix_market(self, path):
        """Debug dump in MatrixMarket coordinate format."""
        from scipy.io import mmwrite

        mmwrite(str(path), self._csr)


class BlockSystem:
    """A 2x2 or 3x3 grid of optional sparse blocks with a partitioned rhs."""

    def __init__(self, blocks, rhs_parts):
        self.blocks = [
            [None if b is None else _as_sparse(b) for b in row] for row in blocks
        ]
        nb = len(self.blocks)
        if nb not in (1, 2, 3) or any(len(r) != nb for r in self.blocks):
            raise DimensionMismatch("blocks must form a square 1x1, 2x2 or 3x3 grid")
        self.rhs_parts = [np.asarray(r, dtype=np.float64) for r in rhs_parts]
        if len(self.rhs_parts) != nb:
            raise DimensionMismatch("rhs partition count must match block rows")
        self.row_sizes = [len(r) for r in self.rhs_parts]
        self.col_sizes = self._infer_col_sizes()
        self._check_consistency()

    @classmethod
    def single(cls, matrix, rhs) -> "BlockSystem":
        return cls([[matrix]], [rhs])

    def _infer_col_sizes(self):
        nb = len(self.blocks)
        sizes = [None] * nb
        for j in range(nb):
            for i in range(nb):
                b = self.blocks[i][j]
                if b is not None:
                    sizes[j] = b.shape[1]
                    break
            if sizes[j] is None:
                raise DimensionMismatch(f"block column {j} is entirely empty")
        return sizes

    def _check_consistency(self):
        for i, row in enumerate(self.blocks):
            for j, b in enumerate(row):
                if b is None:
                    continue
                if b.shape != (self.row_sizes[i], self.col_sizes[j]):
                    raise DimensionMismatch(
                        f"block ({i},{j}) has shape {b.shape}, expected "
                        f"({self.row_sizes[i]}, {self.col_sizes[j]})"
                    )

    @property
    def n_rows(self):
        return sum(self.row_sizes)

    @property
    def n_cols(self):
        return sum(self.col_sizes)

    def assemble(self) -> sp.csr_matrix:
        grid = [
            [None if b is None else b.scipy() for b in row] for row in self.blocks
        ]
        return sp.bmat(grid, format="csc")

    def rhs(self) -> np.ndarray:
        return np.concatenate(self.rhs_parts)

    def split(self, x):
        """Partition a solution vector back into per-block pieces."""
        out, k = [], 0
        for n in self.col_sizes:
            out.append(x[k : k + n])
            k += n
        return out


def _as_sparse(mat) -> SparseMatrix:
    if isinstance(mat, SparseMatrix):
        return mat
    return SparseMatrix.from_scipy(mat)


RESIDUAL_TOL = 1e-10


def solve_direct(system) -> np.ndarray:
    """Sparse direct solve of a finalized square system.

    Accepts a BlockSystem, or a (matrix, rhs) pair. Raises SingularMatrix when
    the factorization detects a zero pivot, and checks the residual a posteriori.
    """
    mat, rhs = _system_parts(system)
    if mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch("solve_direct needs a square system")
    if mat.shape[0] != len(rhs):
        raise DimensionMismatch("rhs length does not match matrix size")
    try:
        lu = spla.splu(mat.tocsc())
        x = lu.solve(rhs)
    except RuntimeError as exc:  # pragma: no cover - scipy signals singularity here
        raise SingularMatrix(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("factorization produced non-finite solution")
    resid = np.linalg.norm(mat @ x - rhs)
    if resid > RESIDUAL_TOL * (1.0 + np.linalg.norm(rhs)) * 100:
        # 100x slack: the contract is checked strictly by callers that need it
        raise SingularMatrix(f"direct solve residual too large: {resid:.3e}")
    return x


class Factorized:
    """A reusable LU factorization (for repeated solves with a frozen matrix)."""

    def __init__(self, mat):
        mat, _ = _system_parts((mat, np.zeros(mat.shape[0] if not isinstance(mat, SparseMatrix) else mat.n_rows)))
        try:
            self._lu = spla.splu(mat.tocsc())
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc

    def solve(self, rhs):
        x = self._lu.solve(np.asarray(rhs, dtype=np.float64))
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("factorization produced non-finite solution")
        return x


def solve_iterative(system, tol=1e-10, max_iter=5000) -> np.ndarray:
    """Conjugate-gradient solve; the matrix must be symmetric positive definite."""
    mat, rhs = _system_parts(system)
    x, info = spla.cg(mat, rhs, rtol=tol, maxiter=max_iter)
    if info > 0:
        raise NoConvergence(f"CG did not reach tol={tol} in {max_iter} iterations")
    if info < 0:
        raise SingularMatrix("CG reports illegal input or breakdown")
    resid = np.linalg.norm(mat @ x - rhs)
    if resid > tol * (1.0 + np.linalg.norm(rhs)) * 10:
        raise NoConvergence(f"CG residual {resid:.3e} above tolerance")
    return x


def _system_parts(system):
    if isinstance(system, BlockSystem):
        return system.assemble(), system.rhs()
    mat, rhs = system
    if isinstance(mat, SparseMatrix):
        mat = mat.scipy()
    return sp.csr_matrix(mat), np.asarray(rhs, dtype=np.float64)
