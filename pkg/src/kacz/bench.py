"""Multi-trial experiment runner.

For each method, ``trials`` independent solves are run; trial ``t`` rebuilds
the problem and seeds the solver with ``seed + t``. The table reports the
mean iteration count and mean wall time over converged trials. A method with
no converged trial shows ``>`` (iteration cap reached) or ``-`` (diverged or
stagnated) instead of a count.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import dataio
from .solvers import Method, SolverConfig, Status, solve

__all__ = ["MatrixSource", "ExperimentPlan", "ResultRow", "run_experiment", "format_table", "table_csv"]

MARK_CAP = ">"
MARK_FAIL = "-"
MARK_ERROR = "err"


@dataclass(frozen=True)
class MatrixSource:
    """Coefficient matrix from a Matrix Market file (or an in-memory matrix)."""

    path: str | None = None
    matrix: object = None
    transpose: bool = False
    rhs_mode: str = "consistent"
    p: int | None = None
    delta: float = 0.0
    label: str | None = None

    def load(self):
        A = self.matrix if self.matrix is not None else dataio.read_matrix_market(self.path)
        return dataio.transpose(A) if self.transpose else A

    @property
    def name(self):
        if self.label:
            return self.label
        base = os.path.splitext(os.path.basename(self.path))[0] if self.path else "matrix"
        return base + ("^T" if self.transpose else "")


@dataclass
class ExperimentPlan:
    source: object  # SyntheticSpec or MatrixSource
    methods: list
    trials: int = 10
    config: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        self.methods = [Method(getattr(m, "value", m)) for m in self.methods]
        if not self.methods:
            raise ValueError("at least one method is required")

    @property
    def label(self):
        s = self.source
        if isinstance(s, MatrixSource):
            return s.name
        return f"{s.m}x{s.n}x{s.p}:{s.rank_mode}:{s.consistency}"


@dataclass
class ResultRow:
    instance: str
    method: str
    trials: int
    converged: int
    capped: int
    diverged: int
    errors: int
    mean_it: float
    mean_seconds: float
    iterations: list
    statuses: list

    @property
    def marker(self):
        if self.converged:
            return f"{self.mean_it:.0f}"
        if self.errors == self.trials:
            return MARK_ERROR
        return MARK_CAP if self.capped >= self.diverged else MARK_FAIL

    @property
    def cpu_cell(self):
        return f"{self.mean_seconds:.4f}" if self.converged else self.marker


def _problem(source, side, seed):
    if isinstance(source, MatrixSource):
        return dataio.instance_from_matrix(
            source.load(), side, source.rhs_mode, p=source.p, delta=source.delta, seed=seed
        )
    return dataio.generate_synthetic(replace(source, side=side.value, seed=seed))


def _one_trial(args):
    source, method, cfg, seed, trace_path = args
    try:
        problem = _problem(source, method.side, seed)
        rep = solve(problem, replace(cfg, method=method, seed=seed))
    except Exception as exc:  # a failed method must not abort the table
        return ("error", 0, 0.0, repr(exc))
    if trace_path:
        dataio.write_trace(rep, trace_path)
    return (rep.status.value, rep.iterations, rep.elapsed, "")


def run_experiment(plan, base_seed=None):
    """Run every (method, trial) of ``plan`` and return the result rows in
    method order.

    ``base_seed`` overrides the seed in the source spec / solver config.
    """
    seed0 = plan.config.seed if base_seed is None else int(base_seed)
    if plan.output_dir:
        os.makedirs(plan.output_dir, exist_ok=True)
    jobs = []
    for method in plan.methods:
        for t in range(plan.trials):
            path = None
            if plan.output_dir:
                path = os.path.join(plan.output_dir, f"{_safe(plan.label)}_{method.value}_t{t}.csv")
            jobs.append((plan.source, method, plan.config, seed0 + t, path))
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as ex:
            results = list(ex.map(_one_trial, jobs))
    else:
        results = [_one_trial(j) for j in jobs]

    rows = []
    for k, method in enumerate(plan.methods):
        chunk = results[k * plan.trials:(k + 1) * plan.trials]
        statuses = [r[0] for r in chunk]
        its = [r[1] for r in chunk]
        ok = [r for r in chunk if r[0] == Status.CONVERGED.value]
        rows.append(
            ResultRow(
                instance=plan.label,
                method=method.value,
                trials=plan.trials,
                converged=len(ok),
                capped=statuses.count(Status.MAX_ITERATIONS.value),
                diverged=statuses.count(Status.DIVERGED.value),
                errors=statuses.count("error"),
                mean_it=float(np.mean([r[1] for r in ok])) if ok else float("nan"),
                mean_seconds=float(np.mean([r[2] for r in ok])) if ok else float("nan"),
                iterations=its,
                statuses=statuses,
            )
        )
    return rows


def _safe(label):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)


_COLUMNS = ("instance", "method", "IT", "CPU", "converged")


def _cells(row):
    return (row.instance, row.method, row.marker, row.cpu_cell, f"{row.converged}/{row.trials}")


def format_table(rows):
    """Aligned plain-text table."""
    body = [_COLUMNS] + [_cells(r) for r in rows]
    widths = [max(len(r[c]) for r in body) for c in range(len(_COLUMNS))]
    lines = ["  ".join(cell.ljust(w) if c < 2 else cell.rjust(w) for c, (cell, w) in enumerate(zip(r, widths))).rstrip()
             for r in body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def table_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(_COLUMNS) + ["mean_it", "mean_seconds", "capped", "diverged", "errors"])
    for r in rows:
        w.writerow(list(_cells(r)) + [f"{r.mean_it:.17g}", f"{r.mean_seconds:.17g}", r.capped, r.diverged, r.errors])
    return buf.getvalue()
