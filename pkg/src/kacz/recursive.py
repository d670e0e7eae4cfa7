"""Recursive minimal-norm updates when a row or column is appended to ``A``.

Given ``X = A^+ B`` (or ``X = C A^+``) and an explicit ``A^+``, appending one
row ``a`` to ``A`` (with right-hand side row ``b``) or one column ``a`` (with
right-hand side column ``c``) is a rank-one Greville update:

    row:     X~ = X + d (b - a X),        A~^+ = [A^+ - d a A^+,  d]
    column:  X~ = X + (c - X a) d,        A~^+ = [A^+ - A^+ a d ; d]

where ``d`` depends on whether the new slice lies in the existing row
(column) space. The warm-start projections give a cheap approximation that
can seed an iterative solve of the augmented equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle
from .matcore import MatrixError

__all__ = [
    "ZeroRow",
    "ZeroColumn",
    "RecursiveState",
    "append_row_update",
    "append_col_update",
    "warm_start_projection",
    "new_slice_satisfied",
    "update_branch",
]

BRANCH_TOL = 1e-8
CHECK_TOL = 1e-8
REVALIDATE_EVERY = 10


class ZeroRow(MatrixError):
    pass


class ZeroColumn(MatrixError):
    pass


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _rel(a, b):
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (nb if nb > 0 else 1.0)


@dataclass(frozen=True)
class RecursiveState:
    """Cached minimal-norm solution of ``AX = B`` or ``XA = C`` with ``A^+``.

    Build one with :meth:`from_problem`; instances are immutable and every
    append returns a new state, so histories may branch freely.

    Attributes
    ----------
    A : ndarray, shape (m, n)
    rhs : ndarray
        ``B`` (m x p) or ``C`` (p x n).
    solution : ndarray
        ``A^+ B`` (n x p) or ``C A^+`` (p x m).
    pinvA : ndarray, shape (n, m)
    side : str
        ``"AX=B"`` or ``"XA=C"``.
    appends : int
        Number of updates applied since the last oracle solve.
    """

    A: np.ndarray
    rhs: np.ndarray
    solution: np.ndarray
    pinvA: np.ndarray
    side: str
    appends: int = 0

    @classmethod
    def from_problem(cls, A, rhs, side="AX=B", pinvA=None, solution=None, check=True):
        """Solve with the oracle (unless ``pinvA``/``solution`` are supplied)
        and validate the cached quantities."""
        side = getattr(side, "value", side)
        if side not in ("AX=B", "XA=C"):
            raise ValueError(f"unknown side {side!r}")
        A = np.array(A, dtype=np.float64)
        if A.ndim != 2:
            raise MatrixError("A must be 2-D")
        rhs = np.array(rhs, dtype=np.float64)
        if rhs.ndim == 1:
            rhs = rhs.reshape(-1, 1) if side == "AX=B" else rhs.reshape(1, -1)
        m, n = A.shape
        if side == "AX=B" and rhs.shape[0] != m:
            raise MatrixError(f"B must have {m} rows")
        if side == "XA=C" and rhs.shape[1] != n:
            raise MatrixError(f"C must have {n} columns")
        P = oracle.pinv(A) if pinvA is None else np.array(pinvA, dtype=np.float64)
        if P.shape != (n, m):
            raise MatrixError(f"pinvA must have shape {(n, m)}")
        X = (P @ rhs if side == "AX=B" else rhs @ P) if solution is None else np.array(solution, dtype=np.float64)
        state = cls(_frozen(A), _frozen(rhs), _frozen(X), _frozen(P), side, 0)
        if check:
            state.validate(full=True)
        return state

    def validate(self, full=False, tol=CHECK_TOL):
        """Check Penrose residuals of ``pinvA``; with ``full`` also compare
        ``solution`` against a fresh oracle solve."""
        res = oracle.penrose_residuals(self.A, self.pinvA)
        if max(res) > tol:
            raise MatrixError(f"pinvA violates the Penrose equations: residuals {res}")
        if full:
            ref = oracle.min_norm_solution(self.A, self.rhs, self.side)
            if _rel(self.solution, ref) > tol:
                raise MatrixError("cached solution differs from the minimal-norm solution")
        return res


def _row_vector(a, n, err):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if a.size != n:
        raise MatrixError(f"new slice must have {n} entries, got {a.size}")
    if not np.any(a):
        raise err("appended slice is all zero")
    return a


def _rhs_vector(b, p):
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size != p:
        raise MatrixError(f"new right-hand side must have {p} entries, got {b.size}")
    return b


def _next(state, A, rhs, X, P):
    new = RecursiveState(_frozen(A), _frozen(rhs), _frozen(X), _frozen(P), state.side, state.appends + 1)
    if new.appends % REVALIDATE_EVERY == 0:
        new.validate()
    return new


def _row_direction(P, A, a, tol):
    """``d`` (length n) for appending row ``a``; also reports the branch."""
    c = a - (a @ P) @ A
    if np.linalg.norm(c) > tol * np.linalg.norm(a):
        return c / (c @ c), "generic"
    Ka = P @ (P.T @ a)  # (A^T A)^+ a^T
    return Ka / (1.0 + a @ Ka), "row_space"


def _col_direction(P, A, a, tol):
    """``d`` (length m) for appending column ``a``."""
    w = a - A @ (P @ a)
    if np.linalg.norm(w) > tol * np.linalg.norm(a):
        return w / (w @ w), "generic"
    Ka = P.T @ (P @ a)  # (A A^T)^+ a
    return Ka / (1.0 + a @ Ka), "col_space"


def append_row_update(state, a, b, branch_tol=BRANCH_TOL):
    """State for ``[A; a] X = [B; b]``.

    Parameters
    ----------
    state : RecursiveState
        Must be on the ``AX=B`` side.
    a : array_like, length n
    b : array_like, length p
    branch_tol : float
        The new row counts as lying in the row space of ``A`` when
        ``||a - a A^+ A|| <= branch_tol * ||a||``.

    Returns
    -------
    RecursiveState
    """
    if state.side != "AX=B":
        raise ValueError("append_row_update needs an AX=B state")
    A, P, X = state.A, state.pinvA, state.solution
    a = _row_vector(a, A.shape[1], ZeroRow)
    b = _rhs_vector(b, X.shape[1])
    d, _ = _row_direction(P, A, a, branch_tol)
    Xn = X + np.outer(d, b - a @ X)
    Pn = np.hstack([P - np.outer(d, a @ P), d[:, None]])
    return _next(state, np.vstack([A, a]), np.vstack([state.rhs, b]), Xn, Pn)


def append_col_update(state, a_new, c_new, branch_tol=BRANCH_TOL):
    """State for ``X [A, a] = [C, c]``.

    Parameters
    ----------
    state : RecursiveState
        Must be on the ``XA=C`` side.
    a_new : array_like, length m
    c_new : array_like, length p
    branch_tol : float
        Column-space test threshold, as for :func:`append_row_update`.
    """
    if state.side != "XA=C":
        raise ValueError("append_col_update needs an XA=C state")
    A, P, X = state.A, state.pinvA, state.solution
    a = _row_vector(a_new, A.shape[0], ZeroColumn)
    c = _rhs_vector(c_new, X.shape[0])
    d, _ = _col_direction(P, A, a, branch_tol)
    Xn = X + np.outer(c - X @ a, d)
    Pn = np.vstack([P - np.outer(P @ a, d), d[None, :]])
    return _next(state, np.hstack([A, a[:, None]]), np.hstack([state.rhs, c[:, None]]), Xn, Pn)


def update_branch(state, new_slice, branch_tol=BRANCH_TOL):
    """Which update formula an append of ``new_slice`` would use."""
    if state.side == "AX=B":
        a = _row_vector(new_slice, state.A.shape[1], ZeroRow)
        return _row_direction(state.pinvA, state.A, a, branch_tol)[1]
    a = _row_vector(new_slice, state.A.shape[0], ZeroColumn)
    return _col_direction(state.pinvA, state.A, a, branch_tol)[1]


def warm_start_projection(state, new_slice, new_rhs):
    """Orthogonal projection of the cached solution onto the solution set of
    the appended equation alone.

    Row case ``X + a^T (b - a X) / ||a||^2``; column case
    ``X + (c - X a) a^T / ||a||^2``. Exact when the new slice is orthogonal
    to every existing row (column); otherwise a starting iterate.
    """
    X = state.solution
    if state.side == "AX=B":
        a = _row_vector(new_slice, state.A.shape[1], ZeroRow)
        b = _rhs_vector(new_rhs, X.shape[1])
        return X + np.outer(a, b - a @ X) / (a @ a)
    a = _row_vector(new_slice, state.A.shape[0], ZeroColumn)
    c = _rhs_vector(new_rhs, X.shape[0])
    return X + np.outer(c - X @ a, a) / (a @ a)


def new_slice_satisfied(state, new_slice, new_rhs, tol):
    """True when the cached solution already fits the new equation to
    relative accuracy ``tol``, so it can be reused as the starting iterate.

    No default ``tol`` is offered; what counts as close enough is up to
    the caller.
    """
    X = state.solution
    if state.side == "AX=B":
        a = _row_vector(new_slice, state.A.shape[1], ZeroRow)
        b = _rhs_vector(new_rhs, X.shape[1])
        r = b - a @ X
    else:
        a = _row_vector(new_slice, state.A.shape[0], ZeroColumn)
        b = _rhs_vector(new_rhs, X.shape[0])
        r = b - X @ a
    nb = np.linalg.norm(b)
    return bool(np.linalg.norm(r) <= tol * (nb if nb > 0 else 1.0))
