"""Dense and compressed-sparse coefficient storage plus the slice kernels
consumed by the row/column projection iterations.

Every kernel takes an optional :class:`KernelCounters` and bumps it by the
number of entries it actually touches, so per-iteration cost can be
checked against an explicit budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MatrixError",
    "ZeroSliceError",
    "DimensionMismatch",
    "KernelCounters",
    "DenseMatrix",
    "SparseMatrix",
    "as_matrix",
    "frobenius_sq",
    "axis_sq_norms",
    "slice_contract",
    "rank_one_accumulate",
]


class MatrixError(ValueError):
    """Invalid matrix construction or access."""


class ZeroSliceError(MatrixError):
    """A row or column of a coefficient matrix is identically zero."""

    def __init__(self, axis, indices):
        self.axis = axis
        self.indices = list(int(i) for i in indices)
        shown = self.indices[:10]
        more = "" if len(self.indices) <= 10 else f" (+{len(self.indices) - 10} more)"
        super().__init__(f"all-zero {axis}(s) at index {shown}{more}")


class DimensionMismatch(MatrixError):
    pass


@dataclass
class KernelCounters:
    """Fused multiply-add and division tallies for one solve."""

    fma: int = 0
    div: int = 0

    def reset(self):
        self.fma = 0
        self.div = 0

    def as_dict(self):
        return {"fma": self.fma, "div": self.div}


def _finite_2d(values, name="matrix"):
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise MatrixError(f"{name} must be two-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MatrixError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MatrixError(f"{name} contains NaN or Inf")
    return arr


class _Compressed:
    """Shared row/column slice access over compressed index/value arrays.

    ``row_ptr/row_idx/row_val`` is a CSR layout, ``col_ptr/col_idx/col_val``
    the matching CSC mirror. Dense matrices expose the same arrays with every
    entry stored so the iteration kernels need only one code path.
    """

    shape: tuple
    row_ptr: np.ndarray
    row_idx: np.ndarray
    row_val: np.ndarray
    col_ptr: np.ndarray
    col_idx: np.ndarray
    col_val: np.ndarray

    @property
    def rows(self):
        return self.shape[0]

    @property
    def cols(self):
        return self.shape[1]

    @property
    def nnz(self):
        return int(self.row_val.size)

    def row(self, i):
        """Return ``(column indices, values)`` of row ``i``."""
        if not 0 <= i < self.shape[0]:
            raise IndexError(f"row index {i} out of range [0, {self.shape[0]})")
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.row_idx[lo:hi], self.row_val[lo:hi]

    def col(self, j):
        """Return ``(row indices, values)`` of column ``j``."""
        if not 0 <= j < self.shape[1]:
            raise IndexError(f"column index {j} out of range [0, {self.shape[1]})")
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.col_idx[lo:hi], self.col_val[lo:hi]

    def row_sq_norms(self):
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.row_ptr))
        return np.bincount(rows, weights=self.row_val * self.row_val, minlength=self.shape[0])

    def col_sq_norms(self):
        cols = np.repeat(np.arange(self.shape[1]), np.diff(self.col_ptr))
        return np.bincount(cols, weights=self.col_val * self.col_val, minlength=self.shape[1])

    def check_no_zero_slices(self):
        for axis, norms in (("row", self.row_sq_norms()), ("column", self.col_sq_norms())):
            bad = np.flatnonzero(norms == 0.0)
            if bad.size:
                raise ZeroSliceError(axis, bad)


class DenseMatrix(_Compressed):
    """Immutable dense ``rows x cols`` float64 matrix."""

    def __init__(self, values):
        arr = _finite_2d(values)
        arr.setflags(write=False)
        self.data = arr
        self.shape = arr.shape
        m, n = arr.shape
        self.row_ptr = np.arange(0, m * n + 1, n, dtype=np.int64)
        self.row_idx = np.tile(np.arange(n, dtype=np.int64), m)
        self.row_val = arr.reshape(-1)
        t = np.ascontiguousarray(arr.T)
        t.setflags(write=False)
        self.col_ptr = np.arange(0, m * n + 1, m, dtype=np.int64)
        self.col_idx = np.tile(np.arange(m, dtype=np.int64), n)
        self.col_val = t.reshape(-1)
        self._t = t

    def row(self, i):
        if not 0 <= i < self.shape[0]:
            raise IndexError(f"row index {i} out of range [0, {self.shape[0]})")
        return self.row_idx[: self.shape[1]], self.data[i]

    def col(self, j):
        if not 0 <= j < self.shape[1]:
            raise IndexError(f"column index {j} out of range [0, {self.shape[1]})")
        return self.col_idx[: self.shape[0]], self._t[j]

    def to_dense(self):
        return self.data.copy()

    def transpose(self):
        return DenseMatrix(self._t)

    @property
    def T(self):
        return self.transpose()

    def __repr__(self):
        return f"DenseMatrix(shape={self.shape})"


class SparseMatrix(_Compressed):
    """Compressed-row matrix with a compressed-column mirror built up front.

    Column indices are strictly increasing inside each row and no explicit
    zeros are stored. Use :meth:`from_coo` or :meth:`from_dense` to build one;
    the constructor validates already-compressed arrays.
    """

    def __init__(self, shape, row_ptr, row_idx, row_val):
        m, n = (int(shape[0]), int(shape[1]))
        if m < 1 or n < 1:
            raise MatrixError(f"shape must be positive, got {shape}")
        row_ptr = np.asarray(row_ptr, dtype=np.int64)
        row_idx = np.asarray(row_idx, dtype=np.int64)
        row_val = np.asarray(row_val, dtype=np.float64)
        if row_ptr.shape != (m + 1,) or row_ptr[0] != 0 or np.any(np.diff(row_ptr) < 0):
            raise MatrixError("malformed row offsets")
        if row_idx.size != row_ptr[-1] or row_val.size != row_ptr[-1]:
            raise MatrixError("row offsets disagree with stored entry count")
        if row_idx.size and (row_idx.min() < 0 or row_idx.max() >= n):
            raise MatrixError("column index out of range")
        if not np.all(np.isfinite(row_val)):
            raise MatrixError("matrix contains NaN or Inf")
        if np.any(row_val == 0.0):
            raise MatrixError("explicitly stored zero")
        d = np.diff(row_idx)
        starts = row_ptr[1:-1]
        inner = np.ones(d.size, dtype=bool)
        inner[starts[(starts > 0) & (starts < row_idx.size)] - 1] = False
        if np.any(d[inner] <= 0):
            raise MatrixError("column indices must increase strictly within each row")
        self.shape = (m, n)
        self.row_ptr, self.row_idx, self.row_val = row_ptr, row_idx, row_val
        rows = np.repeat(np.arange(m, dtype=np.int64), np.diff(row_ptr))
        order = np.lexsort((rows, row_idx))
        self.col_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(row_idx, minlength=n), out=self.col_ptr[1:])
        self.col_idx = rows[order]
        self.col_val = row_val[order]
        for a in (self.row_ptr, self.row_idx, self.row_val, self.col_ptr, self.col_idx, self.col_val):
            a.setflags(write=False)

    @classmethod
    def from_coo(cls, shape, rows, cols, vals):
        """Build from coordinate triplets; duplicates are summed, zeros dropped."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise DimensionMismatch("coordinate arrays differ in length")
        m, n = shape
        if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise MatrixError("coordinate out of range")
        key = rows * n + cols
        order = np.argsort(key, kind="stable")
        key, vals = key[order], vals[order]
        uniq, start = np.unique(key, return_index=True)
        summed = np.add.reduceat(vals, start) if vals.size else vals
        keep = summed != 0.0
        uniq, summed = uniq[keep], summed[keep]
        r, c = np.divmod(uniq, n)
        row_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=m), out=row_ptr[1:])
        return cls((m, n), row_ptr, c, summed)

    @classmethod
    def from_dense(cls, values):
        arr = _finite_2d(values)
        r, c = np.nonzero(arr)
        return cls.from_coo(arr.shape, r, c, arr[r, c])

    def to_dense(self):
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.row_ptr))
        out[rows, self.row_idx] = self.row_val
        return out

    def transpose(self):
        return SparseMatrix((self.shape[1], self.shape[0]), self.col_ptr, self.col_idx, self.col_val)

    @property
    def T(self):
        return self.transpose()

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def as_matrix(values):
    """Coerce to a :class:`DenseMatrix` unless already a matrix type."""
    if isinstance(values, _Compressed):
        return values
    return DenseMatrix(values)


def frobenius_sq(M):
    M = as_matrix(M)
    v = M.row_val
    return float(v @ v)


def axis_sq_norms(M, axis="row"):
    """Squared 2-norm of every row (``axis="row"``) or column (``axis="col"``).

    Raises :class:`ZeroSliceError` when any slice is entirely zero.
    """
    M = as_matrix(M)
    if axis == "row":
        norms = M.row_sq_norms()
    elif axis == "col":
        norms = M.col_sq_norms()
    else:
        raise ValueError(f"axis must be 'row' or 'col', got {axis!r}")
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ZeroSliceError("row" if axis == "row" else "column", bad)
    return norms


def slice_contract(A, index, side, M, counters=None):
    """Contract one slice of ``A`` against ``M``.

    ``side="row"`` returns ``A[index, :] @ M`` (``M`` has ``A.cols`` rows);
    ``side="col"`` returns ``A[:, index] @ M`` (``M`` has ``A.rows`` rows).
    Only stored entries are touched.
    """
    A = as_matrix(A)
    M = np.asarray(M, dtype=np.float64)
    if side == "row":
        need = A.cols
        idx, val = A.row(index)
    elif side == "col":
        need = A.rows
        idx, val = A.col(index)
    else:
        raise ValueError(f"side must be 'row' or 'col', got {side!r}")
    if M.ndim != 2 or M.shape[0] != need:
        raise DimensionMismatch(f"operand must have {need} rows, got shape {M.shape}")
    if counters is not None:
        counters.fma += val.size * M.shape[1]
    if val.size == need:
        return val @ M
    return val @ M[idx]


def rank_one_accumulate(M, u, v, scale, target="full", index=None, counters=None):
    """In-place ``M += scale * u v^T`` restricted to the touched entries.

    ``u`` is either a dense vector of length ``M.shape[0]`` or a sparse
    ``(indices, values)`` pair. With ``target="row"`` only row ``index`` is
    updated (``M[index] += scale * v``, ``u`` ignored); with ``target="col"``
    only column ``index`` (``M[:, index] += scale * u``, ``v`` ignored).
    Returns ``M``.
    """
    if target == "row":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (M.shape[1],):
            raise DimensionMismatch(f"v must have length {M.shape[1]}")
        if scale != 0.0:
            M[index] += scale * v
        if counters is not None:
            counters.fma += v.size
        return M
    if target == "col":
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (M.shape[0],):
            raise DimensionMismatch(f"u must have length {M.shape[0]}")
        if scale != 0.0:
            M[:, index] += scale * u
        if counters is not None:
            counters.fma += u.size
        return M
    if target != "full":
        raise ValueError(f"unknown target {target!r}")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (M.shape[1],):
        raise DimensionMismatch(f"v must have length {M.shape[1]}, got {v.shape}")
    if isinstance(u, tuple):
        idx, val = u
        idx = np.asarray(idx)
        val = np.asarray(val, dtype=np.float64)
        if idx.shape != val.shape:
            raise DimensionMismatch("sparse u index/value length differ")
    else:
        val = np.asarray(u, dtype=np.float64)
        if val.shape != (M.shape[0],):
            raise DimensionMismatch(f"u must have length {M.shape[0]}, got {val.shape}")
        idx = None
    if counters is not None:
        counters.fma += val.size * v.size
    if scale == 0.0:
        return M
    upd = np.outer(scale * val, v)
    if idx is None or idx.size == M.shape[0]:
        M += upd
    else:
        M[idx] += upd
    return M
