"""Problem ingestion and trace persistence.

Matrix Market reading and writing, the Gaussian test-problem generators,
right-hand sides for externally supplied matrices, and the CSV trace format
``iteration,metric,seconds``.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from . import oracle
from .matcore import SparseMatrix, as_matrix
from .sampling import RngState
from .solvers import ProblemInstance, Side, SolveReport, TraceRecord

__all__ = [
    "ParseError",
    "SpecError",
    "read_matrix_market",
    "write_matrix_market",
    "transpose",
    "SyntheticSpec",
    "generate_synthetic",
    "gaussian_matrix",
    "instance_from_matrix",
    "write_trace",
    "read_trace",
    "TRACE_HEADER",
]

TRACE_HEADER = "iteration,metric,seconds"

# Download identifiers (SuiteSparse collection) for the sparse test matrices.
KNOWN_MATRICES = {
    "ash219": "HB/ash219",
    "ash958": "HB/ash958",
    "divorce": "Pajek/divorce",
    "Worldcities": "Pajek/WorldCities",
}


class ParseError(ValueError):
    pass


class SpecError(ValueError):
    pass


# --------------------------------------------------------------------------
# Matrix Market
# --------------------------------------------------------------------------

def _text_lines(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError(f"non-ASCII content: {exc}") from None
    return data.splitlines()


def read_matrix_market(source, allow_zero_slices=False):
    """Parse a real Matrix Market file into a :class:`SparseMatrix`.

    Parameters
    ----------
    source : path, bytes, or binary/text stream
    allow_zero_slices : bool
        By default an all-zero row or column raises
        :class:`~kacz.matcore.ZeroSliceError` listing the offending indices.

    Notes
    -----
    ``coordinate`` and ``array`` layouts with ``real`` or ``integer`` fields
    are accepted. ``symmetric`` and ``skew-symmetric`` storage is expanded;
    ``pattern`` and ``complex`` fields are rejected. Duplicate coordinates
    are summed.
    """
    lines = _text_lines(source)
    if not lines:
        raise ParseError("empty input")
    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket" or head[1].lower() != "matrix":
        raise ParseError(f"bad header line: {lines[0]!r}")
    layout, field, symmetry = (h.lower() for h in head[2:])
    if layout not in ("coordinate", "array"):
        raise ParseError(f"unknown layout {layout!r}")
    if field in ("pattern", "complex"):
        raise ParseError(f"{field} matrices are not supported")
    if field not in ("real", "integer", "double"):
        raise ParseError(f"unknown field {field!r}")
    if symmetry not in ("general", "symmetric", "skew-symmetric"):
        raise ParseError(f"unsupported symmetry {symmetry!r}")

    body = [(k + 2, ln) for k, ln in enumerate(lines[1:]) if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ParseError("missing size line")
    lineno, size_line = body[0]
    entries = body[1:]
    try:
        dims = [int(t) for t in size_line.split()]
    except ValueError:
        raise ParseError(f"line {lineno}: bad size line {size_line!r}") from None

    if layout == "coordinate":
        if len(dims) != 3:
            raise ParseError(f"line {lineno}: coordinate size line needs 'rows cols nnz'")
        m, n, nnz = dims
        if m < 1 or n < 1 or nnz < 0:
            raise ParseError(f"line {lineno}: invalid dimensions {dims}")
        if len(entries) != nnz:
            raise ParseError(f"declared {nnz} entries, found {len(entries)}")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k, (ln_no, ln) in enumerate(entries):
            tok = ln.split()
            if len(tok) != 3:
                raise ParseError(f"line {ln_no}: expected 'row col value', got {ln!r}")
            try:
                rows[k], cols[k], vals[k] = int(tok[0]) - 1, int(tok[1]) - 1, float(tok[2])
            except ValueError:
                raise ParseError(f"line {ln_no}: bad entry {ln!r}") from None
        if nnz and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise ParseError("entry index out of range")
    else:
        if len(dims) != 2:
            raise ParseError(f"line {lineno}: array size line needs 'rows cols'")
        m, n = dims
        if m < 1 or n < 1:
            raise ParseError(f"line {lineno}: invalid dimensions {dims}")
        if symmetry == "general":
            cols, rows = np.divmod(np.arange(m * n, dtype=np.int64), m)  # column-major
        else:
            if m != n:
                raise ParseError("symmetric array storage needs a square matrix")
            off = 0 if symmetry == "symmetric" else 1
            pairs = [(i, j) for j in range(n) for i in range(j + off, n)]
            rows = np.array([p[0] for p in pairs], dtype=np.int64)
            cols = np.array([p[1] for p in pairs], dtype=np.int64)
        if len(entries) != rows.size:
            raise ParseError(f"expected {rows.size} array values, found {len(entries)}")
        try:
            vals = np.array([float(ln.split()[0]) for _, ln in entries if len(ln.split()) == 1])
        except ValueError:
            raise ParseError("bad array value") from None
        if vals.size != rows.size:
            raise ParseError("array entries must hold one value per line")

    if not np.all(np.isfinite(vals)):
        raise ParseError("non-finite value")
    if symmetry != "general":
        if np.any(rows < cols):
            raise ParseError("symmetric storage must list the lower triangle only")
        sign = 1.0 if symmetry == "symmetric" else -1.0
        if symmetry == "skew-symmetric" and np.any((rows == cols) & (vals != 0)):
            raise ParseError("skew-symmetric matrix with nonzero diagonal")
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, sign * vals[off]]),
        )
    M = SparseMatrix.from_coo((m, n), rows, cols, vals)
    if not allow_zero_slices:
        M.check_no_zero_slices()
    return M


def write_matrix_market(M, sink, comment=None):
    """Write ``coordinate real general`` with 17 significant digits, which
    round-trips every double exactly."""
    M = as_matrix(M)
    m, n = M.shape
    rows = np.repeat(np.arange(m), np.diff(M.row_ptr))
    out = ["%%MatrixMarket matrix coordinate real general"]
    if comment:
        out.extend("% " + c for c in str(comment).splitlines())
    out.append(f"{m} {n} {M.nnz}")
    out.extend(f"{i + 1} {j + 1} {v:.17g}" for i, j, v in zip(rows.tolist(), M.row_idx.tolist(), M.row_val.tolist()))
    _emit("\n".join(out) + "\n", sink)


def _emit(text, sink):
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    elif isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("ascii"))


def transpose(M):
    """Explicit transpose, for the ``A^T`` variants of the sparse test cases."""
    return as_matrix(M).transpose()


# --------------------------------------------------------------------------
# synthetic problems
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian test problem.

    ``rank_mode`` is ``full``, ``half_cols`` (``A = [A0, A0]``) or
    ``half_rows`` (``A = [A0; A0]``). Inconsistent problems add
    ``noise_scale * randn`` to the right-hand side.
    """

    m: int
    n: int
    p: int
    rank_mode: str = "full"
    consistency: str = "consistent"
    noise_scale: float = 0.0
    seed: int = 0
    side: str = "AX=B"

    def __post_init__(self):
        for name in ("m", "n", "p"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise SpecError(f"{name} must be a positive integer, got {v!r}")
        if self.rank_mode not in ("full", "half_cols", "half_rows"):
            raise SpecError(f"unknown rank_mode {self.rank_mode!r}")
        if self.rank_mode == "half_cols" and self.n % 2:
            raise SpecError("half_cols needs an even n")
        if self.rank_mode == "half_rows" and self.m % 2:
            raise SpecError("half_rows needs an even m")
        if self.consistency not in ("consistent", "inconsistent"):
            raise SpecError(f"unknown consistency {self.consistency!r}")
        if not np.isfinite(self.noise_scale) or self.noise_scale < 0:
            raise SpecError("noise_scale must be finite and >= 0")
        if self.consistency == "inconsistent" and self.noise_scale == 0:
            raise SpecError("an inconsistent problem needs noise_scale > 0")
        if self.consistency == "consistent" and self.noise_scale != 0:
            raise SpecError("noise_scale > 0 only for inconsistent problems")
        if getattr(self.side, "value", self.side) not in ("AX=B", "XA=C"):
            raise SpecError(f"unknown side {self.side!r}")


def gaussian_matrix(rng, m, n, rank_mode="full"):
    """Standard normal ``m x n`` matrix, optionally ``[A0, A0]`` or ``[A0; A0]``."""
    if not isinstance(rng, RngState):
        rng = RngState(rng)
    if rank_mode == "half_cols":
        A0 = rng.normals(m * (n // 2)).reshape(m, n // 2)
        return np.hstack([A0, A0])
    if rank_mode == "half_rows":
        A0 = rng.normals((m // 2) * n).reshape(m // 2, n)
        return np.vstack([A0, A0])
    return rng.normals(m * n).reshape(m, n)


def generate_synthetic(spec):
    """Build the :class:`ProblemInstance` described by ``spec``.

    ``A`` is drawn first, so specs differing only in ``side`` share the same
    coefficient matrix. The reference solution used for relative error is
    the minimal-norm (least-squares) solution; the generating matrix ``X*``
    and its distance to that reference are kept in ``meta``.
    """
    rng = RngState(spec.seed)
    A = gaussian_matrix(rng, spec.m, spec.n, spec.rank_mode)
    side = Side(getattr(spec.side, "value", spec.side))
    return _with_rhs(A, side, spec.p, spec.consistency, spec.noise_scale, rng, dict(spec=spec))


def _with_rhs(A, side, p, consistency, delta, rng, meta):
    Ad = A.to_dense() if not isinstance(A, np.ndarray) else A
    m, n = Ad.shape
    if side is Side.AXB:
        Xg = rng.normals(n * p).reshape(n, p)
        rhs = Ad @ Xg
    else:
        Xg = rng.normals(p * m).reshape(p, m)
        rhs = Xg @ Ad
    if consistency == "inconsistent":
        rhs = rhs + delta * rng.normals(rhs.size).reshape(rhs.shape)
    ref = oracle.min_norm_solution(Ad, rhs, side)
    nref = np.linalg.norm(ref) or 1.0
    meta = dict(meta, generator_solution=Xg, generator_gap=float(np.linalg.norm(Xg - ref) / nref))
    return ProblemInstance(side, A, rhs, known_solution=ref, consistency=consistency, meta=meta)


def instance_from_matrix(A, side="AX=B", rhs_mode="consistent", p=None, delta=0.0, seed=0):
    """Right-hand side for a given coefficient matrix.

    ``rhs_mode`` is ``consistent`` (``A X*`` or ``X* A`` with Gaussian
    ``X*``), ``inconsistent`` (plus ``delta * randn``) or ``identity``
    (``B = I_m`` or ``C = I_n``, so the minimal-norm solution is ``A^+``).
    """
    A = as_matrix(A)
    side = Side(getattr(side, "value", side))
    m, n = A.shape
    if rhs_mode == "identity":
        rhs = np.eye(m) if side is Side.AXB else np.eye(n)
        return ProblemInstance(side, A, rhs, known_solution=oracle.pinv(A.to_dense()), meta={"rhs_mode": "identity"})
    if rhs_mode not in ("consistent", "inconsistent"):
        raise SpecError(f"unknown rhs_mode {rhs_mode!r}")
    if rhs_mode == "inconsistent" and not delta > 0:
        raise SpecError("an inconsistent right-hand side needs delta > 0")
    if p is None:
        p = n if side is Side.AXB else m
    rng = RngState(seed)
    return _with_rhs(A, side, int(p), rhs_mode, delta, rng, {"rhs_mode": rhs_mode})


# --------------------------------------------------------------------------
# traces
# --------------------------------------------------------------------------

def write_trace(report, sink):
    """CSV trace: header then ``iteration,metric,seconds`` rows, 17
    significant digits, ``\\n`` line ends.

    ``report`` may be a :class:`SolveReport` or a sequence of
    :class:`TraceRecord`.
    """
    trace = report.trace if isinstance(report, SolveReport) else list(report)
    lines = [TRACE_HEADER]
    last = None
    for r in trace:
        if last is not None and r.iteration <= last:
            raise ValueError("trace iterations must be strictly increasing")
        last = r.iteration
        lines.append(f"{int(r.iteration)},{float(r.metric):.17g},{float(r.seconds):.17g}")
    _emit("\n".join(lines) + "\n", sink)


def read_trace(source):
    lines = _text_lines(source)
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise ParseError("missing trace header")
    out = []
    for k, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        tok = ln.split(",")
        if len(tok) != 3:
            raise ParseError(f"line {k}: expected 3 fields")
        try:
            out.append(TraceRecord(int(tok[0]), float(tok[1]), float(tok[2])))
        except ValueError:
            raise ParseError(f"line {k}: bad value in {ln!r}") from None
    return out
