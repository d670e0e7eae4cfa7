"""Iteration backends: compiled Cython loops or a pure numpy fallback.

The compiled extension is used when it imports; set ``KACZ_BACKEND=python``
to force the fallback. Both backends consume the same index sequences and
report the same kernel counts, so their iterates agree to rounding.
"""

from __future__ import annotations

import os
import time

import numpy as np

from .solvers import (
    Side,
    TraceRecord,
    step_regsiax,
    step_regsixa,
    step_rekiax,
    step_rekixa,
    step_rgsiax,
    step_rgsixa,
    step_rkcax,
    step_rkcxa,
)

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

__all__ = ["COMPILED_AVAILABLE", "DEFAULT", "get", "available"]

COMPILED_AVAILABLE = _kernels is not None


def _csr_matmul(ptr, ind, val, M):
    """``A @ M`` for a compressed layout with no empty slices."""
    prod = val[:, None] * M[ind]
    return np.add.reduceat(prod, ptr[:-1], axis=0)


def _initial_aux(problem, method, x_shape):
    fam = method.family
    m, n = problem.A.shape
    aux = {}
    if fam == "RGSI":
        pass  # residual built from X below
    elif fam == "REKI":
        aux["Z"] = problem.rhs.copy() if problem.side is Side.AXB else problem.rhs.T.copy()
    elif fam == "REGSI":
        aux["Y"] = np.zeros(x_shape)
        aux["R"] = problem.rhs.copy()
    return aux


class PythonBackend:
    name = "python"

    def prepare(self, problem, method, x0, row_norms, col_norms):
        X = np.zeros(problem.solution_shape) if x0 is None else x0.copy()
        aux = _initial_aux(problem, method, problem.solution_shape)
        if method.family == "RGSI":
            aux["R"] = problem.rhs - self._apply(problem, X)
        return {
            "problem": problem,
            "method": method,
            "X": X,
            "aux": aux,
            "rn": row_norms,
            "cn": col_norms,
        }

    @staticmethod
    def _apply(problem, X):
        A = problem.A
        if problem.side is Side.AXB:
            return _csr_matmul(A.row_ptr, A.row_idx, A.row_val, X)
        return _csr_matmul(A.col_ptr, A.col_idx, A.col_val, X.T).T

    def metric(self, state, ctx):
        X = state["X"]
        problem = state["problem"]
        if ctx.metric_kind in (0, 1):
            d = X - ctx.ref
            ctx.counters.fma += X.size
            v = float(np.sum(d * d)) / ctx.denom
            return float(np.sqrt(v)) if ctx.metric_kind == 1 else v
        A = problem.A
        T = problem.rhs - self._apply(problem, X)
        if problem.side is Side.AXB:
            G = _csr_matmul(A.col_ptr, A.col_idx, A.col_val, T)
        else:
            G = _csr_matmul(A.row_ptr, A.row_idx, A.row_val, T.T)
        ctx.counters.fma += 2 * A.nnz * X.shape[1 if problem.side is Side.AXB else 0]
        return float(np.sum(G * G)) / ctx.denom

    def advance(self, state, xs, aux_seq, k, nsteps, ctx):
        problem = state["problem"]
        A, rhs, X, aux = problem.A, problem.rhs, state["X"], state["aux"]
        rn, cn = state["rn"], state["cn"]
        c = ctx.counters
        name = state["method"].value
        stride = ctx.stride
        for s in range(nsteps):
            i = int(xs[s])
            j = int(aux_seq[s])
            if name == "RKCAX":
                step_rkcax(A, rhs, X, i, rn, c)
            elif name == "RKCXA":
                step_rkcxa(A, rhs, X, i, cn, c)
            elif name == "RGSIAX":
                step_rgsiax(A, aux["R"], X, i, cn, c)
            elif name == "RGSIXA":
                step_rgsixa(A, aux["R"], X, i, rn, c)
            elif name == "REKIAX":
                step_rekiax(A, rhs, aux["Z"], X, i, j, rn, cn, c)
            elif name == "REKIXA":
                step_rekixa(A, rhs, aux["Z"], X, j, i, rn, cn, c)
            elif name == "REGSIAX":
                step_regsiax(A, rhs, aux["Y"], aux["R"], X, i, j, rn, cn, c)
            else:
                step_regsixa(A, rhs, aux["Y"], aux["R"], X, j, i, rn, cn, c)
            k += 1
            if k % stride == 0:
                v = self.metric(state, ctx)
                ctx.trace.append(TraceRecord(k, v, time.perf_counter() - ctx.t0))
                if v < ctx.tol:
                    return k, 1
                if not np.isfinite(v) or v > ctx.threshold:
                    return k, 2
        return k, 0

    def result(self, state):
        return state["X"], state["aux"]


_FAMILY_CODE = {"RKC": 0, "RGSI": 1, "REKI": 2, "REGSI": 3}


class CompiledBackend:
    """Runs every method in AX=B orientation; XA=C problems are transposed."""

    name = "compiled"

    def prepare(self, problem, method, x0, row_norms, col_norms):
        A = problem.A
        flip = problem.side is Side.XAC
        if flip:
            csr = (A.col_ptr, A.col_idx, A.col_val)
            csc = (A.row_ptr, A.row_idx, A.row_val)
            rn, cn = col_norms, row_norms
            B = np.ascontiguousarray(problem.rhs.T)
        else:
            csr = (A.row_ptr, A.row_idx, A.row_val)
            csc = (A.col_ptr, A.col_idx, A.col_val)
            rn, cn = row_norms, col_norms
            B = np.ascontiguousarray(problem.rhs)
        m_eff = B.shape[0]
        n_eff = csc[0].size - 1
        p = B.shape[1]
        X = np.zeros((n_eff, p)) if x0 is None else np.ascontiguousarray(x0.T if flip else x0)
        fam = method.family
        dummy = np.zeros((1, 1))
        Z = Y = R = dummy
        if fam == "REKI":
            Z = B.copy()
        elif fam == "REGSI":
            Y = np.zeros((n_eff, p))
            R = B.copy()
        elif fam == "RGSI":
            R = B - _csr_matmul(*csr, X)
        return {
            "flip": flip,
            "fam": _FAMILY_CODE[fam],
            "famname": fam,
            "csr": tuple(np.ascontiguousarray(a) for a in csr),
            "csc": tuple(np.ascontiguousarray(a) for a in csc),
            "rn": np.ascontiguousarray(rn),
            "cn": np.ascontiguousarray(cn),
            "B": B,
            "X": X,
            "Z": Z,
            "Y": Y,
            "R": R,
            "T": np.zeros((m_eff, p)),
            "G": np.zeros((n_eff, p)),
            "w1": np.zeros(p),
            "w2": np.zeros(p),
            "cnt": np.zeros(2, dtype=np.int64),
            "ref": None,
        }

    def _ref(self, state, ctx):
        if state["ref"] is None:
            if ctx.ref is None:
                state["ref"] = np.zeros((1, 1))
            else:
                state["ref"] = np.ascontiguousarray(ctx.ref.T if state["flip"] else ctx.ref)
        return state["ref"]

    def _flush(self, state, ctx):
        cnt = state["cnt"]
        ctx.counters.fma += int(cnt[0])
        ctx.counters.div += int(cnt[1])
        cnt[:] = 0

    def metric(self, state, ctx):
        v = _kernels.metric(
            ctx.metric_kind, *state["csr"], state["B"], state["X"], self._ref(state, ctx),
            ctx.denom, state["T"], state["G"], state["cnt"],
        )
        self._flush(state, ctx)
        return v

    def advance(self, state, xs, aux_seq, k, nsteps, ctx):
        raw = []
        k, flag = _kernels.advance(
            state["fam"], *state["csr"], *state["csc"], state["rn"], state["cn"],
            state["B"], state["X"], state["Z"], state["Y"], state["R"],
            np.ascontiguousarray(xs, dtype=np.int64), np.ascontiguousarray(aux_seq, dtype=np.int64),
            k, nsteps, ctx.stride, ctx.metric_kind, self._ref(state, ctx), ctx.denom,
            ctx.tol, ctx.threshold, state["T"], state["G"], state["w1"], state["w2"],
            state["cnt"], raw, time.perf_counter, ctx.t0,
        )
        ctx.trace.extend(TraceRecord(int(a), float(b), float(c)) for a, b, c in raw)
        self._flush(state, ctx)
        return k, flag

    def result(self, state):
        flip = state["flip"]
        X = state["X"].T.copy() if flip else state["X"]
        fam = state["famname"]
        aux = {}
        if fam == "REKI":
            aux["Z"] = state["Z"]  # n x p in both orientations
        elif fam == "REGSI":
            aux["Y"] = state["Y"].T.copy() if flip else state["Y"]
            aux["R"] = state["R"].T.copy() if flip else state["R"]
        elif fam == "RGSI":
            aux["R"] = state["R"].T.copy() if flip else state["R"]
        return X, aux


_BACKENDS = {"python": PythonBackend()}
if COMPILED_AVAILABLE:
    _BACKENDS["compiled"] = CompiledBackend()


def available():
    return sorted(_BACKENDS)


def _default():
    want = os.environ.get("KACZ_BACKEND", "").strip().lower()
    if want:
        if want not in _BACKENDS:
            raise ImportError(f"KACZ_BACKEND={want!r} is not available (have {available()})")
        return want
    return "compiled" if COMPILED_AVAILABLE else "python"


DEFAULT = _default()


def get(name=None):
    name = name or DEFAULT
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available (have {available()})") from None
