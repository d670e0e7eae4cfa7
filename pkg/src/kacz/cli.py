"""Command-line entry point: ``kacz {solve,inverse,bench,recursive-demo}``.

Exit codes for ``solve`` (and ``inverse``): 0 converged, 2 iteration cap
reached, 3 diverged or stagnated, 1 usage or I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import dataio, oracle
from .bench import ExperimentPlan, MatrixSource, format_table, run_experiment, table_csv
from .matcore import MatrixError
from .recursive import RecursiveState, append_col_update, append_row_update, warm_start_projection
from .sampling import RngState
from .solvers import Method, Side, SolverConfig, Status, compute_inverse, solve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CAP = 2
EXIT_DIVERGED = 3

_STATUS_EXIT = {Status.CONVERGED: EXIT_OK, Status.MAX_ITERATIONS: EXIT_CAP, Status.DIVERGED: EXIT_DIVERGED}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with MaxIterations
    def error(self, message):
        raise UsageError(message)


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("KACZ_SEED")
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"KACZ_SEED must be an integer, got {env!r}") from None


def _problem_args(p, method_required=True):
    p.add_argument("--method", choices=[m.value for m in Method], required=method_required)
    p.add_argument("--side", choices=[s.value for s in Side])
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--rank-mode", choices=["full", "half_cols", "half_rows"], default="full")
    p.add_argument("--delta", type=float, default=None, help="noise scale for inconsistent problems (default 1e-5)")
    p.add_argument("--matrix", help="Matrix Market file for A")
    p.add_argument("--transpose", action="store_true", help="use the transpose of --matrix")
    p.add_argument("--rhs-mode", choices=["consistent", "inconsistent", "identity"], default="consistent")


def _solver_args(p):
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=50000)
    p.add_argument("--seed", type=int, default=None, help="base seed (fallback: $KACZ_SEED, then 0)")
    p.add_argument("--selection", choices=["random", "cyclic"], default="random")
    p.add_argument("--trace-stride", type=int, default=1)
    p.add_argument("--backend", choices=["compiled", "python"], default=None)


def build_parser():
    ap = _Parser(prog="kacz", description="Kaczmarz-type solvers for AX=B and XA=C.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run one method once")
    _problem_args(s)
    _solver_args(s)
    s.add_argument("--trace-out", help="directory for the CSV trace")

    inv = sub.add_parser("inverse", help="iterative right, left or Moore-Penrose inverse")
    inv.add_argument("--kind", choices=["right", "left", "moore_penrose"], default="moore_penrose")
    _problem_args(inv, method_required=False)
    _solver_args(inv)
    inv.add_argument("--trace-out", help="directory for the CSV trace")

    b = sub.add_parser("bench", help="multi-trial table")
    _problem_args(b, method_required=False)
    _solver_args(b)
    b.add_argument("--methods", help="comma-separated list (default: all that match --side, else all)")
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--trace-out", help="directory for per-trial CSV traces")
    b.add_argument("--table-out", help="write the table here (.csv for CSV, plain text otherwise)")

    r = sub.add_parser("recursive-demo", help="append a row or column and update the solution")
    r.add_argument("--side", choices=[s.value for s in Side], default="AX=B")
    r.add_argument("--m", type=int, default=10)
    r.add_argument("--n", type=int, default=40)
    r.add_argument("--p", type=int, default=3)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--tol", type=float, default=1e-6)
    r.add_argument("--max-iters", type=int, default=50000)
    r.add_argument("--in-span", action="store_true", help="append a slice from the existing row/column space")
    return ap


def _side(args, method):
    if method is not None:
        if args.side and Side(args.side) is not method.side:
            raise UsageError(f"{method.value} solves {method.side.value}, not {args.side}")
        return method.side
    return Side(args.side or "AX=B")


def _delta(args):
    if args.rhs_mode == "inconsistent":
        return 1e-5 if args.delta is None else args.delta
    if args.delta not in (None, 0.0):
        raise UsageError("--delta only applies with --rhs-mode inconsistent")
    return 0.0


def _instance(args, side, seed):
    delta = _delta(args)
    if args.matrix:
        A = dataio.read_matrix_market(args.matrix)
        if args.transpose:
            A = dataio.transpose(A)
        return dataio.instance_from_matrix(A, side, args.rhs_mode, p=args.p, delta=delta, seed=seed)
    if args.rhs_mode == "identity":
        rng = RngState(seed)
        A = dataio.gaussian_matrix(rng, args.m, args.n, args.rank_mode)
        return dataio.instance_from_matrix(A, side, "identity")
    spec = dataio.SyntheticSpec(
        args.m, args.n, args.p if args.p is not None else 30, args.rank_mode,
        args.rhs_mode, delta, seed, side.value,
    )
    return dataio.generate_synthetic(spec)


def _config(args, method, seed):
    return SolverConfig(
        method=method, selection=args.selection, tolerance=args.tol, max_iterations=args.max_iters,
        seed=seed, trace_stride=args.trace_stride,
    )


def _report(rep, out):
    print(f"method      {rep.method.value}", file=out)
    print(f"status      {rep.status.value}", file=out)
    print(f"iterations  {rep.iterations}", file=out)
    print(f"{rep.metric:<11} {rep.final_metric:.6e}", file=out)
    print(f"seconds     {rep.elapsed:.6f}", file=out)
    print(f"backend     {rep.backend}", file=out)
    print(f"fma/div     {rep.counters.fma}/{rep.counters.div}", file=out)
    for note in rep.notes:
        print(f"note        {note}", file=out)


def _write_trace(rep, directory, name):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    dataio.write_trace(rep, path)
    return path


def cmd_solve(args, out):
    method = Method(args.method)
    side = _side(args, method)
    seed = _seed(args)
    problem = _instance(args, side, seed)
    rep = solve(problem, _config(args, method, seed), backend=args.backend)
    _report(rep, out)
    if args.trace_out:
        print(f"trace       {_write_trace(rep, args.trace_out, f'{method.value}_seed{seed}.csv')}", file=out)
    return _STATUS_EXIT[rep.status]


def cmd_inverse(args, out):
    seed = _seed(args)
    if args.matrix:
        A = dataio.read_matrix_market(args.matrix)
        if args.transpose:
            A = dataio.transpose(A)
    else:
        A = dataio.gaussian_matrix(RngState(seed), args.m, args.n, args.rank_mode)
    method = Method(args.method) if args.method else Method.REKIAX
    rep = compute_inverse(A, args.kind, _config(args, method, seed), backend=args.backend)
    _report(rep, out)
    res = oracle.penrose_residuals(A if isinstance(A, np.ndarray) else A.to_dense(), rep.X)
    print("penrose     " + " ".join(f"{r:.3e}" for r in res), file=out)
    if args.trace_out:
        print(f"trace       {_write_trace(rep, args.trace_out, f'inverse_{args.kind}_seed{seed}.csv')}", file=out)
    return _STATUS_EXIT[rep.status]


def cmd_bench(args, out):
    seed = _seed(args)
    if args.methods:
        try:
            methods = [Method(m.strip()) for m in args.methods.split(",") if m.strip()]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    elif args.method:
        methods = [Method(args.method)]
    elif args.side:
        methods = [m for m in Method if m.side is Side(args.side)]
    else:
        methods = list(Method)
    delta = _delta(args)
    if args.matrix:
        source = MatrixSource(path=args.matrix, transpose=args.transpose, rhs_mode=args.rhs_mode, p=args.p, delta=delta)
        source = replace(source, matrix=source.load(), transpose=False, label=source.name)
    else:
        if args.rhs_mode == "identity":
            raise UsageError("bench with --rhs-mode identity needs --matrix")
        source = dataio.SyntheticSpec(
            args.m, args.n, args.p if args.p is not None else 30, args.rank_mode, args.rhs_mode, delta, seed
        )
    plan = ExperimentPlan(
        source, methods, trials=args.trials, config=_config(args, methods[0], seed),
        output_dir=args.trace_out, workers=args.workers,
    )
    rows = run_experiment(plan, base_seed=seed)
    text = format_table(rows)
    out.write(text)
    if args.table_out:
        body = table_csv(rows) if args.table_out.lower().endswith(".csv") else text
        with open(args.table_out, "w", encoding="ascii", newline="\n") as fh:
            fh.write(body)
    return EXIT_OK


def cmd_recursive_demo(args, out):
    seed = _seed(args)
    rng = RngState(seed)
    m, n, p = args.m, args.n, args.p
    A = rng.normals(m * n).reshape(m, n)
    side = Side(args.side)
    if side is Side.AXB:
        Xg = rng.normals(n * p).reshape(n, p)
        rhs = A @ Xg
        a = (rng.normals(m) @ A) if args.in_span else rng.normals(n)
        new_rhs = a @ Xg
    else:
        Xg = rng.normals(p * m).reshape(p, m)
        rhs = Xg @ A
        a = (A @ rng.normals(n)) if args.in_span else rng.normals(m)
        new_rhs = Xg @ a
    state = RecursiveState.from_problem(A, rhs, side.value)
    upd = append_row_update(state, a, new_rhs) if side is Side.AXB else append_col_update(state, a, new_rhs)
    ref = oracle.min_norm_solution(upd.A, upd.rhs, side.value)
    err = np.linalg.norm(upd.solution - ref) / (np.linalg.norm(ref) or 1.0)
    print(f"side               {side.value}", file=out)
    print(f"augmented A        {upd.A.shape[0]}x{upd.A.shape[1]}", file=out)
    print(f"update vs oracle   {err:.3e}", file=out)
    print("penrose            " + " ".join(f"{r:.3e}" for r in oracle.penrose_residuals(upd.A, upd.pinvA)), file=out)

    from .solvers import ProblemInstance

    problem = ProblemInstance(side, upd.A, upd.rhs, known_solution=ref, consistency="consistent")
    method = Method.RKCAX if side is Side.AXB else Method.RKCXA
    cfg = SolverConfig(method=method, tolerance=args.tol, max_iterations=args.max_iters, seed=seed)
    cold = solve(problem, cfg)
    warm = solve(problem, cfg, x0=warm_start_projection(state, a, new_rhs))
    print(f"{method.value} from zero  {cold.iterations} iterations ({cold.status.value})", file=out)
    print(f"{method.value} warm start {warm.iterations} iterations ({warm.status.value})", file=out)
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "inverse": cmd_inverse,
    "bench": cmd_bench,
    "recursive-demo": cmd_recursive_demo,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"kacz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, MatrixError) as exc:
        print(f"kacz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
