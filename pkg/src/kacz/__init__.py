"""Randomized Kaczmarz-type solvers for AX = B and XA = C."""

from .matcore import DenseMatrix, KernelCounters, SparseMatrix
from .solvers import (
    Method,
    ProblemInstance,
    Side,
    SolverConfig,
    SolveReport,
    Status,
    compute_inverse,
    solve,
)
from ._backend import COMPILED_AVAILABLE

__version__ = "0.1.0"

__all__ = [
    "COMPILED_AVAILABLE",
    "DenseMatrix",
    "KernelCounters",
    "Method",
    "ProblemInstance",
    "Side",
    "SolveReport",
    "SolverConfig",
    "SparseMatrix",
    "Status",
    "compute_inverse",
    "solve",
]
