"""Compressed-row sparse matrices for lane adjacencies.

Only what the lane graph needs is provided: construction from coordinate
triples, transpose, sparse-sparse products (numeric or boolean), powers,
block-diagonal stacking and the differentiable sparse-dense product.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse

from .tensor import ShapeError, Tensor, as_tensor, result


class SparseMatrix:
    """Immutable CSR matrix with sorted, duplicate-free column indices per row."""

    def __init__(self, rows: int, cols: int, row_offsets, col_indices, values=None,
                 check: bool = True):
        self.rows = int(rows)
        self.cols = int(cols)
        self.row_offsets = np.asarray(row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(col_indices, dtype=np.int64)
        if values is None:
            values = np.ones(len(self.col_indices))
        self.values = np.asarray(values, dtype=np.float64)
        self._transpose: SparseMatrix | None = None
        self._csr = None
        if check:
            self._validate()

    def _validate(self) -> None:
        ro, ci = self.row_offsets, self.col_indices
        if len(ro) != self.rows + 1 or ro[0] != 0 or ro[-1] != len(ci):
            raise ValueError("row_offsets must have rows+1 entries from 0 to nnz")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if len(self.values) != len(ci):
            raise ValueError("values and col_indices differ in length")
        if len(ci):
            if ci.min() < 0 or ci.max() >= self.cols:
                raise ValueError("column index out of range")
            step = np.diff(ci)
            same_row = np.diff(self.row_index()) == 0
            if np.any(step[same_row] <= 0):
                raise ValueError("column indices must strictly increase within a row")

    @classmethod
    def from_coo(cls, rows: int, cols: int, r, c, v=None) -> "SparseMatrix":
        """Build from coordinate triples; duplicate entries are summed."""
        r = np.asarray(r, dtype=np.int64)
        c = np.asarray(c, dtype=np.int64)
        v = np.ones(len(r)) if v is None else np.asarray(v, dtype=np.float64)
        if len(r) and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise IndexError(f"coordinate outside {rows}x{cols}")
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if len(r):
            first = np.ones(len(r), dtype=bool)
            first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
            starts = np.flatnonzero(first)
            v = np.add.reduceat(v, starts)
            r, c = r[starts], c[starts]
        offsets = np.zeros(rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=rows), out=offsets[1:])
        return cls(rows, cols, offsets, c, v, check=False)

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        r, c = np.nonzero(dense)
        return cls.from_coo(dense.shape[0], dense.shape[1], r, c, dense[r, c])

    @classmethod
    def empty(cls, rows: int, cols: int | None = None) -> "SparseMatrix":
        cols = rows if cols is None else cols
        return cls(rows, cols, np.zeros(rows + 1, dtype=np.int64), [], [], check=False)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n), check=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def nnz(self) -> int:
        return len(self.col_indices)

    def row_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.rows), np.diff(self.row_offsets))

    def coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.row_index(), self.col_indices, self.values

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_index(), self.col_indices] = self.values
        return out

    def transpose(self) -> "SparseMatrix":
        if self._transpose is None:
            r, c, v = self.coo()
            t = SparseMatrix.from_coo(self.cols, self.rows, c, r, v)
            t._transpose = self
            self._transpose = t
        return self._transpose

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def binarize(self) -> "SparseMatrix":
        keep = self.values != 0
        r, c, _ = self.coo()
        return SparseMatrix.from_coo(self.rows, self.cols, r[keep], c[keep])

    def pattern(self) -> set[tuple[int, int]]:
        r, c, _ = self.coo()
        return set(zip(r.tolist(), c.tolist()))

    def permute(self, perm) -> "SparseMatrix":
        """Return P A P^T where node ``i`` moves to position ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        r, c, v = self.coo()
        return SparseMatrix.from_coo(self.rows, self.cols, perm[r], perm[c], v)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return sparse_matmul(self, other)
        return sparse_dense_matmul(self, other)

    def __repr__(self) -> str:
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def sparse_matmul(a: SparseMatrix, b: SparseMatrix, binarize: bool = False) -> SparseMatrix:
    """Sparse-sparse product; with ``binarize`` the boolean semiring is used."""
    if a.cols != b.rows:
        raise ShapeError(f"sparse_matmul: {a.shape} @ {b.shape}")
    a_rows, a_cols, a_vals = a.coo()
    counts = b.row_offsets[a_cols + 1] - b.row_offsets[a_cols]
    total = int(counts.sum())
    if total == 0:
        return SparseMatrix.empty(a.rows, b.cols)
    seg_start = np.repeat(np.cumsum(counts) - counts, counts)
    pos = np.repeat(b.row_offsets[a_cols], counts) + (np.arange(total) - seg_start)
    rows = np.repeat(a_rows, counts)
    cols = b.col_indices[pos]
    if binarize:
        return SparseMatrix.from_coo(a.rows, b.cols, rows, cols).binarize()
    vals = np.repeat(a_vals, counts) * b.values[pos]
    return SparseMatrix.from_coo(a.rows, b.cols, rows, cols, vals)


def sparse_power(a: SparseMatrix, k: int, binarize: bool = True) -> SparseMatrix:
    """``a`` raised to the ``k``-th power by repeated squaring.

    With ``binarize`` an entry is 1 iff a walk of exactly ``k`` steps exists.
    """
    if a.rows != a.cols:
        raise ShapeError(f"sparse_power needs a square matrix, got {a.shape}")
    if int(k) != k or k < 1:
        raise ValueError(f"sparse_power: k must be an integer >= 1, got {k}")
    base = a.binarize() if binarize else a
    acc = None
    k = int(k)
    while True:
        if k & 1:
            acc = base if acc is None else sparse_matmul(acc, base, binarize=binarize)
        k >>= 1
        if not k:
            return acc
        base = sparse_matmul(base, base, binarize=binarize)


def sparse_union(mats, symmetric: bool = False) -> SparseMatrix:
    """Elementwise OR of same-shape matrices, optionally symmetrized."""
    mats = list(mats)
    rows, cols = mats[0].shape
    rs, cs = [], []
    for m in mats:
        r, c, v = m.coo()
        keep = v != 0
        rs.append(r[keep])
        cs.append(c[keep])
        if symmetric:
            rs.append(c[keep])
            cs.append(r[keep])
    return SparseMatrix.from_coo(rows, cols, np.concatenate(rs), np.concatenate(cs)).binarize()


def block_diag(mats) -> SparseMatrix:
    mats = list(mats)
    rows = sum(m.rows for m in mats)
    cols = sum(m.cols for m in mats)
    rs, cs, vs = [], [], []
    ro = co = 0
    for m in mats:
        r, c, v = m.coo()
        rs.append(r + ro)
        cs.append(c + co)
        vs.append(v)
        ro += m.rows
        co += m.cols
    if not mats:
        return SparseMatrix.empty(0, 0)
    return SparseMatrix.from_coo(rows, cols, np.concatenate(rs), np.concatenate(cs),
                                 np.concatenate(vs))


def _spmm(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    if a.nnz == 0:
        return np.zeros((a.rows,) + x.shape[1:])
    if a._csr is None:
        a._csr = scipy.sparse.csr_matrix((a.values, a.col_indices, a.row_offsets), shape=a.shape)
    flat = x.reshape(x.shape[0], -1)
    return np.asarray(a._csr @ flat).reshape((a.rows,) + x.shape[1:])


def sparse_dense_matmul(a: SparseMatrix, x: Tensor) -> Tensor:
    """``A @ X`` for sparse ``A``; the gradient w.r.t. ``X`` is ``A^T @ dY``."""
    x = as_tensor(x)
    if x.ndim < 1 or a.cols != x.shape[0]:
        raise ShapeError(f"sparse_dense_matmul: {a.shape} @ {x.shape}")
    return result(_spmm(a, x.data), (x,), lambda g: (_spmm(a.transpose(), g),))
