"""Kaczmarz-type iterations for ``AX = B`` and ``XA = C``.

Eight methods, each touching a single row or column of ``A`` per step:

========  ======  ===========================================================
method    side    step
========  ======  ===========================================================
RKCAX     AX=B    project ``X`` onto ``{X : A[i] X = B[i]}``
RKCXA     XA=C    project ``X`` onto ``{X : X A[:, j] = C[:, j]}``
RGSIAX    AX=B    coordinate descent on row ``j`` of ``X``, residual kept
RGSIXA    XA=C    coordinate descent on column ``i`` of ``X``, residual kept
REKIAX    AX=B    extended Kaczmarz: ``Z -> (I - AA^+)B`` plus RK on ``B - Z``
REKIXA    XA=C    mirror of REKIAX
REGSIAX   AX=B    RGS sequence ``Y`` plus one RK step of ``X`` toward ``AY``
REGSIXA   XA=C    mirror of REGSIAX
========  ======  ===========================================================

Indices are 0-based throughout. The single-step functions (``step_*``)
mutate their array arguments in place; :func:`solve` drives them through
either the compiled kernels or the pure-Python loop (see :mod:`kacz._backend`).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .matcore import (
    DimensionMismatch,
    KernelCounters,
    MatrixError,
    as_matrix,
    axis_sq_norms,
    rank_one_accumulate,
    slice_contract,
)
from .sampling import CyclicState, RngState, WeightedSampler

__all__ = [
    "Side",
    "Method",
    "Status",
    "ValidationError",
    "MethodSideMismatch",
    "ProblemInstance",
    "SolverConfig",
    "TraceRecord",
    "SolveReport",
    "step_rkcax",
    "step_rkcxa",
    "step_rgsiax",
    "step_rgsixa",
    "step_rekiax",
    "step_rekixa",
    "step_regsiax",
    "step_regsixa",
    "solve",
    "compute_inverse",
]


class Side(str, enum.Enum):
    AXB = "AX=B"
    XAC = "XA=C"


class Method(str, enum.Enum):
    RKCAX = "RKCAX"
    RKCXA = "RKCXA"
    RGSIAX = "RGSIAX"
    RGSIXA = "RGSIXA"
    REKIAX = "REKIAX"
    REKIXA = "REKIXA"
    REGSIAX = "REGSIAX"
    REGSIXA = "REGSIXA"

    @property
    def side(self):
        return Side.AXB if self.value.endswith("AX") else Side.XAC

    @property
    def family(self):
        return self.value[:-2]  # RKC / RGSI / REKI / REGSI

    @property
    def extended(self):
        return self.family in ("REKI", "REGSI")


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    DIVERGED = "Diverged"


class ValidationError(MatrixError):
    pass


class MethodSideMismatch(ValueError):
    pass


@dataclass
class ProblemInstance:
    """A matrix equation ``AX = B`` or ``XA = C``.

    ``rhs`` is ``B`` (m x p) or ``C`` (p x n). ``known_solution`` is the
    reference iterate for the relative-error stop metric, when available.
    """

    side: Side
    A: object
    rhs: np.ndarray
    known_solution: np.ndarray | None = None
    consistency: str = "unknown"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.side = Side(getattr(self.side, "value", self.side))
        self.A = as_matrix(self.A)
        self.A.check_no_zero_slices()
        rhs = np.array(self.rhs, dtype=np.float64)
        if rhs.ndim == 1:
            rhs = rhs.reshape(-1, 1) if self.side is Side.AXB else rhs.reshape(1, -1)
        m, n = self.A.shape
        if self.side is Side.AXB and rhs.shape[0] != m:
            raise ValidationError(f"B must have {m} rows, got {rhs.shape}")
        if self.side is Side.XAC and (rhs.ndim != 2 or rhs.shape[1] != n):
            raise ValidationError(f"C must have {n} columns, got {rhs.shape}")
        if not np.all(np.isfinite(rhs)):
            raise ValidationError("right-hand side contains NaN or Inf")
        self.rhs = rhs
        if self.known_solution is not None:
            xs = np.array(self.known_solution, dtype=np.float64)
            if xs.shape != self.solution_shape:
                raise ValidationError(f"known solution must have shape {self.solution_shape}, got {xs.shape}")
            self.known_solution = xs
        if self.consistency not in ("consistent", "inconsistent", "unknown"):
            raise ValidationError(f"bad consistency label {self.consistency!r}")

    @property
    def p(self):
        return self.rhs.shape[1] if self.side is Side.AXB else self.rhs.shape[0]

    @property
    def solution_shape(self):
        m, n = self.A.shape
        return (n, self.p) if self.side is Side.AXB else (self.p, m)


@dataclass
class SolverConfig:
    method: Method = Method.RKCAX
    selection: str = "randomized"
    tolerance: float = 1e-6
    max_iterations: int = 50000
    seed: int = 0
    trace_stride: int = 1
    stop_metric: str | None = None  # None: RE when a reference exists, else residual_projection
    divergence_threshold: float = 1e12
    stall_window: int = 10000

    def __post_init__(self):
        self.method = Method(getattr(self.method, "value", self.method))
        if self.selection == "random":
            self.selection = "randomized"
        if self.selection not in ("randomized", "cyclic"):
            raise ValueError(f"selection must be 'randomized' or 'cyclic', got {self.selection!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.trace_stride < 1:
            raise ValueError("trace_stride must be >= 1")
        if self.stall_window < 0:
            raise ValueError("stall_window must be >= 0")
        if self.stop_metric not in (None, "RE", "residual_projection", "nrmse"):
            raise ValueError(f"unknown stop metric {self.stop_metric!r}")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    metric: float
    seconds: float


@dataclass
class SolveReport:
    X: np.ndarray
    status: Status
    iterations: int
    trace: list
    elapsed: float
    counters: KernelCounters
    method: Method
    metric: str
    final_metric: float
    aux: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    backend: str = ""

    @property
    def converged(self):
        return self.status is Status.CONVERGED


# --------------------------------------------------------------------------
# single steps
# --------------------------------------------------------------------------

def _norms(A, norms, axis):
    return axis_sq_norms(A, axis) if norms is None else norms


def step_rkcax(A, B, X, i, row_norms=None, counters=None):
    """``X += A[i]^T (B[i] - A[i] X) / ||A[i]||^2``."""
    A = as_matrix(A)
    M = _norms(A, row_norms, "row")
    r = B[i] - slice_contract(A, i, "row", X, counters)
    if counters is not None:
        counters.fma += r.size
        counters.div += 1
    return rank_one_accumulate(X, A.row(i), r, 1.0 / M[i], counters=counters)


def step_rkcxa(A, C, X, j, col_norms=None, counters=None):
    """``X += (C[:, j] - X A[:, j]) A[:, j]^T / ||A[:, j]||^2`` for ``X`` of shape p x m."""
    A = as_matrix(A)
    N = _norms(A, col_norms, "col")
    Xt = X.T
    r = C[:, j] - slice_contract(A, j, "col", Xt, counters)
    if counters is not None:
        counters.fma += r.size
        counters.div += 1
    rank_one_accumulate(Xt, A.col(j), r, 1.0 / N[j], counters=counters)
    return X


def step_rgsiax(A, R, X, j, col_norms=None, counters=None):
    """Coordinate step on row ``j`` of ``X``; ``R = B - AX`` is kept current."""
    A = as_matrix(A)
    N = _norms(A, col_norms, "col")
    W = slice_contract(A, j, "col", R, counters) / N[j]
    if counters is not None:
        counters.fma += W.size
        counters.div += 1
    rank_one_accumulate(X, None, W, 1.0, target="row", index=j, counters=counters)
    rank_one_accumulate(R, A.col(j), W, -1.0, counters=counters)
    return X, R


def step_rgsixa(A, R, X, i, row_norms=None, counters=None):
    """Coordinate step on column ``i`` of ``X``; ``R = C - XA`` is kept current."""
    A = as_matrix(A)
    M = _norms(A, row_norms, "row")
    U = slice_contract(A, i, "row", R.T, counters) / M[i]
    if counters is not None:
        counters.fma += U.size
        counters.div += 1
    rank_one_accumulate(X, U, None, 1.0, target="col", index=i, counters=counters)
    rank_one_accumulate(R.T, A.row(i), U, -1.0, counters=counters)
    return X, R


def step_rekiax(A, B, Z, X, i, j, row_norms=None, col_norms=None, counters=None):
    """Extended Kaczmarz step: column ``j`` projects ``Z``, row ``i`` updates ``X``.

    ``Z`` starts at ``B`` and tends to ``(I - AA^+) B``.
    """
    A = as_matrix(A)
    M = _norms(A, row_norms, "row")
    N = _norms(A, col_norms, "col")
    g = slice_contract(A, j, "col", Z, counters)
    rank_one_accumulate(Z, A.col(j), g, -1.0 / N[j], counters=counters)
    r = B[i] - Z[i] - slice_contract(A, i, "row", X, counters)
    if counters is not None:
        counters.fma += 2 * r.size
        counters.div += 2
    rank_one_accumulate(X, A.row(i), r, 1.0 / M[i], counters=counters)
    return Z, X


def step_rekixa(A, C, Z, X, i, j, row_norms=None, col_norms=None, counters=None):
    """Mirror of :func:`step_rekiax`: row ``i`` projects ``Z`` (n x p, starts at
    ``C^T``), column ``j`` updates ``X`` (p x m)."""
    A = as_matrix(A)
    M = _norms(A, row_norms, "row")
    N = _norms(A, col_norms, "col")
    g = slice_contract(A, i, "row", Z, counters)
    rank_one_accumulate(Z, A.row(i), g, -1.0 / M[i], counters=counters)
    Xt = X.T
    r = C[:, j] - Z[j] - slice_contract(A, j, "col", Xt, counters)
    if counters is not None:
        counters.fma += 2 * r.size
        counters.div += 2
    rank_one_accumulate(Xt, A.col(j), r, 1.0 / N[j], counters=counters)
    return Z, X


def step_regsiax(A, B, Y, R, X, i, j, row_norms=None, col_norms=None, counters=None):
    """RGS step on ``Y`` (column ``j``) then one Kaczmarz step of ``X`` toward
    ``AX = AY`` along row ``i``. ``B`` enters only through ``R = B - AY``."""
    A = as_matrix(A)
    M = _norms(A, row_norms, "row")
    step_rgsiax(A, R, Y, j, col_norms, counters)
    d = slice_contract(A, i, "row", X, counters) - slice_contract(A, i, "row", Y, counters)
    if counters is not None:
        counters.fma += d.size
        counters.div += 1
    rank_one_accumulate(X, A.row(i), d, -1.0 / M[i], counters=counters)
    return Y, R, X


def step_regsixa(A, C, Y, R, X, i, j, row_norms=None, col_norms=None, counters=None):
    """Mirror of :func:`step_regsiax` for ``XA = C``: RGS on row ``i`` of ``A``,
    Kaczmarz correction of ``X`` along column ``j``."""
    A = as_matrix(A)
    N = _norms(A, col_norms, "col")
    step_rgsixa(A, R, Y, i, row_norms, counters)
    d = slice_contract(A, j, "col", X.T, counters) - slice_contract(A, j, "col", Y.T, counters)
    if counters is not None:
        counters.fma += d.size
        counters.div += 1
    rank_one_accumulate(X.T, A.col(j), d, -1.0 / N[j], counters=counters)
    return Y, R, X


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

# (sampler for the X-step index, sampler for the auxiliary-step index)
_SLICES = {
    "RKCAX": ("row", None),
    "RKCXA": ("col", None),
    "RGSIAX": ("col", None),
    "RGSIXA": ("row", None),
    "REKIAX": ("row", "col"),
    "REKIXA": ("col", "row"),
    "REGSIAX": ("row", "col"),
    "REGSIXA": ("col", "row"),
}

_CHUNK = 4096


class _IndexStream:
    """Per-iteration index pairs shared by every backend.

    Randomised selection consumes one uniform per index per iteration, the
    X-step index first.
    """

    def __init__(self, method, selection, seed, row_norms, col_norms):
        xs_axis, aux_axis = _SLICES[method.value]
        self.two = aux_axis is not None
        norms = {"row": row_norms, "col": col_norms}
        self.selection = selection
        if selection == "randomized":
            self.rng = RngState(seed)
            self.xs = WeightedSampler(norms[xs_axis])
            self.aux = WeightedSampler(norms[aux_axis]) if self.two else None
        else:
            self.xs = CyclicState(norms[xs_axis].size)
            self.aux = CyclicState(norms[aux_axis].size) if self.two else None

    def take(self, count):
        if self.selection == "cyclic":
            xs = self.xs.take(count)
            aux = self.aux.take(count) if self.two else xs
            return xs, aux
        if self.two:
            u = self.rng.uniforms(2 * count)
            return self.xs.indices_for(u[0::2]), self.aux.indices_for(u[1::2])
        xs = self.xs.indices_for(self.rng.uniforms(count))
        return xs, xs


@dataclass
class _Context:
    metric_kind: int  # 0 RE, 1 nrmse, 2 residual projection
    ref: np.ndarray | None
    denom: float
    stride: int
    tol: float
    threshold: float
    trace: list
    t0: float
    counters: KernelCounters


def _residual_projection_denominator(problem):
    A = problem.A.to_dense()
    if problem.side is Side.AXB:
        g = A.T @ problem.rhs
    else:
        g = problem.rhs @ A.T
    d = float(np.sum(g * g))
    return d if d > 0 else 1.0


def _validate_pair(problem, method):
    if method.side is not problem.side:
        raise MethodSideMismatch(f"{method.value} solves {method.side.value}, problem is {problem.side.value}")


def solve(problem, cfg=None, x0=None, backend=None):
    """Run one method on ``problem`` until the stop metric drops below
    ``cfg.tolerance``, the iteration cap is hit, or the metric blows up.

    Parameters
    ----------
    problem : ProblemInstance
    cfg : SolverConfig
    x0 : ndarray, optional
        Initial iterate (default zero). The auxiliary sequences always start
        from their defaults: ``Z = B`` (``C^T``), ``Y = 0``.
    backend : str, optional
        ``"compiled"`` or ``"python"``; default is the import-time choice.

    Returns
    -------
    SolveReport
    """
    from . import _backend

    cfg = cfg or SolverConfig()
    method = cfg.method
    _validate_pair(problem, method)
    be = _backend.get(backend)

    A = problem.A
    row_norms = axis_sq_norms(A, "row")
    col_norms = axis_sq_norms(A, "col")

    metric = cfg.stop_metric
    if metric is None:
        metric = "RE" if problem.known_solution is not None else "residual_projection"
    notes = []
    if metric in ("RE", "nrmse"):
        if problem.known_solution is None:
            raise ValidationError(f"stop metric {metric} needs a known solution")
        ref = problem.known_solution
        denom = float(np.sum(ref * ref)) or 1.0
        kind = 0 if metric == "RE" else 1
    else:
        ref = None
        denom = _residual_projection_denominator(problem)
        kind = 2
        notes.append("stop metric is the normal-equation residual ratio, not relative error")
    if method.family in ("RKC",) and problem.consistency == "inconsistent":
        notes.append("consistent-equation method on inconsistent input: convergence not expected")

    if x0 is not None:
        x0 = np.array(x0, dtype=np.float64)
        if x0.shape != problem.solution_shape:
            raise DimensionMismatch(f"x0 must have shape {problem.solution_shape}")

    counters = KernelCounters()
    stream = _IndexStream(method, cfg.selection, cfg.seed, row_norms, col_norms)
    state = be.prepare(problem, method, x0, row_norms, col_norms)
    trace = []
    t0 = time.perf_counter()
    ctx = _Context(kind, ref, denom, cfg.trace_stride, cfg.tolerance, cfg.divergence_threshold, trace, t0, counters)

    m0 = be.metric(state, ctx)
    trace.append(TraceRecord(0, m0, 0.0))
    status = None
    k = 0
    if m0 < cfg.tolerance:
        status = Status.CONVERGED
    elif not np.isfinite(m0) or m0 > cfg.divergence_threshold:
        status = Status.DIVERGED
    reason = ""
    window = cfg.stall_window
    next_stall = window if window else None
    while status is None and k < cfg.max_iterations:
        n = min(_CHUNK, cfg.max_iterations - k)
        if next_stall is not None:
            n = min(n, next_stall - k)
        xs, aux = stream.take(n)
        k, flag = be.advance(state, xs, aux, k, n, ctx)
        if flag == 1:
            status = Status.CONVERGED
        elif flag == 2:
            status = Status.DIVERGED
            reason = "metric exceeded divergence threshold"
        elif next_stall is not None and k >= next_stall:
            next_stall += window
            if _stalled(trace, window):
                status = Status.DIVERGED
                reason = f"metric stagnated over {window} iterations"
    if status is None:
        status = Status.MAX_ITERATIONS
    if trace[-1].iteration != k:
        mk = be.metric(state, ctx)
        trace.append(TraceRecord(k, mk, time.perf_counter() - t0))
    final = trace[-1].metric
    if status is Status.MAX_ITERATIONS and final < cfg.tolerance:
        status = Status.CONVERGED
    elapsed = time.perf_counter() - t0
    if reason:
        notes.append(reason)
    X, aux_arrays = be.result(state)
    return SolveReport(
        X=X,
        status=status,
        iterations=k,
        trace=trace,
        elapsed=elapsed,
        counters=counters,
        method=method,
        metric=metric,
        final_metric=final,
        aux=aux_arrays,
        notes=notes,
        backend=be.name,
    )


def _stalled(trace, window, factor=0.9):
    last = trace[-1]
    if last.iteration < window:
        return False
    cutoff = last.iteration - window
    earlier = None
    for rec in reversed(trace):
        if rec.iteration <= cutoff:
            earlier = rec
            break
    if earlier is None:
        return False
    return last.metric > factor * earlier.metric


def compute_inverse(A, kind="moore_penrose", cfg=None, use_oracle=True, backend=None):
    """Iterative right, left or Moore-Penrose inverse of ``A``.

    ``right`` runs RKCAX on ``AX = I_m``, ``left`` runs RKCXA on ``XA = I_n``,
    ``moore_penrose`` runs REKIAX on ``AX = I_m`` unless ``cfg.method`` names
    another extended method (REKIXA/REGSIXA use ``XA = I_n``). With
    ``use_oracle`` the stop metric is relative error against the SVD
    pseudoinverse; otherwise the residual metric is used.
    """
    from . import oracle

    A = as_matrix(A)
    m, n = A.shape
    cfg = cfg or SolverConfig()
    if kind == "right":
        method = Method.RKCAX
    elif kind == "left":
        method = Method.RKCXA
    elif kind in ("moore_penrose", "mp", "pinv"):
        method = cfg.method if cfg.method.extended else Method.REKIAX
    else:
        raise ValueError(f"unknown inverse kind {kind!r}")
    cfg = replace(cfg, method=method)
    known = oracle.pinv(A) if use_oracle else None
    if method.side is Side.AXB:
        problem = ProblemInstance(Side.AXB, A, np.eye(m), known_solution=known)
    else:
        problem = ProblemInstance(Side.XAC, A, np.eye(n), known_solution=known)
    return solve(problem, cfg, backend=backend)
