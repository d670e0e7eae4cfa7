"""Direct-method ground truth: SVD, pseudoinverse, minimal-norm solutions.

The SVD is a one-sided (Hestenes) Jacobi iteration. Column pairs are
visited in round-robin tournament order so that each round rotates
``n/2`` disjoint pairs at once with vectorised numpy operations.
Deliberately slow and simple; nothing here is used inside the iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matcore import as_matrix

__all__ = [
    "NoConvergence",
    "SvdResult",
    "svd",
    "pinv",
    "min_norm_solution",
    "contraction_rate",
    "numerical_rank",
    "penrose_residuals",
]

MAX_SWEEPS = 30
_EPS = np.finfo(np.float64).eps


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    rank_tol: float

    @property
    def rank(self):
        return int(self.s.size)


def _dense(A):
    if isinstance(A, np.ndarray):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim == 1:
            A = A.reshape(1, -1)
        return A
    return as_matrix(A).to_dense()


def _tournament(n):
    """Round-robin schedule: ``n - 1`` rounds (``n`` even) of disjoint pairs."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = players[:half]
        q = players[half:][::-1]
        rounds.append((np.array(p), np.array(q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi_columns(W, tol):
    """Orthogonalise the columns of ``W`` (m x n, m >= n) in place.

    Returns the accumulated right rotation ``V``.
    """
    m, n = W.shape
    if n % 2:
        W = np.hstack([W, np.zeros((m, 1))])
    npad = W.shape[1]
    V = np.eye(npad)
    scale = np.linalg.norm(W)
    if scale == 0.0:
        return W[:, :n], V[:n, :n]
    floor = (_EPS * scale) ** 2
    rounds = _tournament(npad) if npad > 1 else []
    for _ in range(MAX_SWEEPS):
        rotated = False
        for P, Q in rounds:
            wp, wq = W[:, P], W[:, Q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            act = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (alpha > floor) & (beta > floor)
            if not act.any():
                continue
            rotated = True
            P, Q = P[act], Q[act]
            alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t[zeta == 0.0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            wp, wq = W[:, P], W[:, Q]
            W[:, P] = c * wp - s * wq
            W[:, Q] = s * wp + c * wq
            vp, vq = V[:, P], V[:, Q]
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq
        if not rotated:
            return W[:, :n], V[:n, :n]
    raise NoConvergence(f"one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps")


def svd(A, rank_tol=None):
    """Thin SVD ``A = U diag(s) V^T`` truncated to numerical rank.

    Singular values ``<= rank_tol * s_max`` are dropped. The default
    ``rank_tol`` is ``1e-10 * max(m, n)``.
    """
    A = _dense(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains NaN or Inf")
    m, n = A.shape
    if rank_tol is None:
        rank_tol = 1e-10 * max(m, n)
    flip = m < n
    W = (A.T if flip else A).copy()
    W, V = _jacobi_columns(W, tol=max(W.shape[0], 1) * _EPS)
    s = np.linalg.norm(W, axis=0)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    keep = s > rank_tol * s[0] if s.size and s[0] > 0 else np.zeros(s.size, dtype=bool)
    s = s[keep]
    U = W[:, order][:, keep] / s
    V = V[:, order][:, keep]
    if flip:
        U, V = V, U
    return SvdResult(U=U, s=s, V=V, rank_tol=float(rank_tol))


def numerical_rank(A, rank_tol=None):
    return svd(A, rank_tol).rank


def pinv(A, rank_tol=None):
    r = svd(A, rank_tol)
    return (r.V / r.s) @ r.U.T


def min_norm_solution(A, rhs, side="AX=B", rank_tol=None):
    """``A^+ B`` for ``side="AX=B"`` or ``C A^+`` for ``side="XA=C"``."""
    side = getattr(side, "value", side)
    P = pinv(A, rank_tol)
    rhs = np.asarray(rhs, dtype=np.float64)
    if side == "AX=B":
        return P @ rhs
    if side == "XA=C":
        return rhs @ P
    raise ValueError(f"unknown side {side!r}")


def contraction_rate(A, rank_tol=None):
    """``1 - s_min^2 / ||A||_F^2`` with ``s_min`` the smallest nonzero singular value."""
    r = svd(A, rank_tol)
    if r.rank == 0:
        raise ValueError("zero matrix has no nonzero singular value")
    fro2 = float(np.sum(_dense(A) ** 2))
    return max(0.0, 1.0 - r.s[-1] ** 2 / fro2)


def penrose_residuals(A, X):
    """Relative Frobenius residuals of the four Penrose equations for ``X ~ A^+``."""
    A = _dense(A)
    X = np.asarray(X, dtype=np.float64)
    AX = A @ X
    XA = X @ A
    nA = np.linalg.norm(A) or 1.0
    nX = np.linalg.norm(X) or 1.0
    return (
        np.linalg.norm(AX @ A - A) / nA,
        np.linalg.norm(XA @ X - X) / nX,
        np.linalg.norm(AX - AX.T) / (np.linalg.norm(AX) or 1.0),
        np.linalg.norm(XA - XA.T) / (np.linalg.norm(XA) or 1.0),
    )
