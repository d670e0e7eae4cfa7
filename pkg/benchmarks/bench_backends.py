"""Wall-clock comparison of the compiled and pure-Python iteration backends.

    python3 benchmarks/bench_backends.py [--iters 20000] [--repeat 3]

Every method runs a fixed number of iterations (tolerance set to zero so
nothing stops early) on a dense Gaussian instance and on a sparse one. The
two backends must return the same iterate; the script checks that too.
"""

import argparse
import time

import numpy as np

from kacz import _backend
from kacz.dataio import SyntheticSpec, generate_synthetic, instance_from_matrix
from kacz.matcore import SparseMatrix
from kacz.sampling import RngState
from kacz.solvers import Method, SolverConfig, solve


def _sparse_instance(m, n, density, seed):
    rng = RngState(seed)
    u = rng.uniforms(m * n).reshape(m, n)
    A = np.where(u < density, rng.normals(m * n).reshape(m, n), 0.0)
    A[np.arange(m), np.arange(m) % n] = 1.0  # no empty rows or columns
    A[np.arange(n) % m, np.arange(n)] = 1.0
    return SparseMatrix.from_dense(A)


def run(iters, repeat):
    cases = {
        "dense 200x100 p=100": lambda side: generate_synthetic(SyntheticSpec(200, 100, 100, seed=1, side=side)),
        "sparse 1000x300 p=10 (2%)": lambda side: instance_from_matrix(
            _sparse_instance(1000, 300, 0.02, 3), side, p=10, seed=1),
    }
    backends = _backend.available()
    print(f"backends: {', '.join(backends)}; {iters} iterations per run, best of {repeat}")
    header = f"{'case':<28}{'method':<9}" + "".join(f"{b + ' [s]':>14}" for b in backends) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, make in cases.items():
        problems = {s: make(s) for s in ("AX=B", "XA=C")}
        for method in Method:
            problem = problems[method.side.value]
            cfg = SolverConfig(method=method, tolerance=1e-300, max_iterations=iters, seed=5,
                               trace_stride=iters, stall_window=0)
            best, X = {}, {}
            for b in backends:
                times = []
                for _ in range(repeat):
                    t = time.perf_counter()
                    rep = solve(problem, cfg, backend=b)
                    times.append(time.perf_counter() - t)
                best[b] = min(times)
                X[b] = rep.X
            if len(backends) == 2:
                scale = np.abs(X["python"]).max() or 1.0
                assert np.abs(X["compiled"] - X["python"]).max() <= 1e-9 * scale, method
            speed = best["python"] / best["compiled"] if "compiled" in best else float("nan")
            print(f"{label:<28}{method.value:<9}" + "".join(f"{best[b]:>14.4f}" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    run(a.iters, a.repeat)
