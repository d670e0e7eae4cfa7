import numpy as np
import pytest

from kacz import oracle
from kacz.dataio import SyntheticSpec, generate_synthetic
from kacz.matcore import KernelCounters, SparseMatrix, ZeroSliceError
from kacz.solvers import (
    Method,
    MethodSideMismatch,
    ProblemInstance,
    Side,
    SolverConfig,
    Status,
    ValidationError,
    compute_inverse,
    solve,
    step_regsiax,
    step_regsixa,
    step_rekiax,
    step_rekixa,
    step_rgsiax,
    step_rgsixa,
    step_rkcax,
    step_rkcxa,
)


# ---- single-step examples -------------------------------------------------

def test_step_rkcax_example():
    X = np.zeros((2, 2))
    step_rkcax(np.array([[3.0, 0.0], [0.0, 4.0]]), np.array([[3.0, 3.0], [8.0, 8.0]]), X, 1)
    np.testing.assert_array_equal(X, [[0, 0], [2, 2]])


def test_step_rkcax_identity_and_fixed_point(rng):
    B = rng.standard_normal((2, 3))
    X = np.zeros((2, 3))
    step_rkcax(np.eye(2), B, X, 0)
    np.testing.assert_array_equal(X[0], B[0])
    A = rng.standard_normal((3, 2))
    X = rng.standard_normal((2, 3))
    before = X.copy()
    step_rkcax(A, A @ X, X, 2)
    np.testing.assert_allclose(X, before, atol=1e-14)


def test_step_rkcxa_identity_sets_column(rng):
    C = rng.standard_normal((3, 2))
    X = np.zeros((3, 2))
    step_rkcxa(np.eye(2), C, X, 1)
    np.testing.assert_array_equal(X[:, 1], C[:, 1])


def test_step_rkcxa_fixed_point(rng):
    A = rng.standard_normal((2, 3))
    X = rng.standard_normal((4, 2))
    before = X.copy()
    step_rkcxa(A, X @ A, X, 2)
    np.testing.assert_allclose(X, before, atol=1e-14)


def test_step_rkcxa_spec_example():
    # A = [[3],[0]] has a zero row, which a ProblemInstance rejects; the raw step still applies
    X = np.zeros((1, 2))
    A = SparseMatrix.from_coo((2, 1), [0], [0], [3.0])
    step_rkcxa(A, np.array([[6.0]]), X, 0)
    np.testing.assert_array_equal(X, [[2.0, 0.0]])


def test_step_rgsiax_example():
    A = np.array([[1.0], [1.0]])
    B = np.array([[1.0], [3.0]])
    X = np.zeros((1, 1))
    R = B.copy()
    step_rgsiax(A, R, X, 0)
    np.testing.assert_array_equal(X, [[2.0]])
    np.testing.assert_array_equal(R, [[-1.0], [1.0]])
    X0, R0 = X.copy(), np.zeros((2, 1))
    step_rgsiax(A, R0, X, 0)
    np.testing.assert_array_equal(X, X0)


def test_step_rgsixa_example():
    A = np.array([[1.0, 1.0]])
    C = np.array([[1.0, 3.0]])
    X = np.zeros((1, 1))
    R = C.copy()
    step_rgsixa(A, R, X, 0)
    np.testing.assert_array_equal(X, [[2.0]])
    np.testing.assert_array_equal(R, [[-1.0, 1.0]])


def test_step_rgs_identity_sets_slice(rng):
    B = rng.standard_normal((3, 2))
    X = np.zeros((3, 2))
    R = B.copy()
    step_rgsiax(np.eye(3), R, X, 2)
    np.testing.assert_array_equal(X[2], B[2])
    C = rng.standard_normal((2, 3))
    X = np.zeros((2, 3))
    R = C.copy()
    step_rgsixa(np.eye(3), R, X, 1)
    np.testing.assert_array_equal(X[:, 1], C[:, 1])


def test_step_rekiax_example():
    A = np.array([[1.0], [1.0]])
    B = np.array([[1.0], [3.0]])
    Z = B.copy()
    X = np.zeros((1, 1))
    step_rekiax(A, B, Z, X, 0, 0)
    np.testing.assert_array_equal(Z, [[-1.0], [1.0]])
    np.testing.assert_array_equal(X, [[2.0]])


def test_step_rekixa_example():
    A = np.array([[1.0, 1.0]])
    C = np.array([[1.0, 3.0]])
    Z = C.T.copy()
    X = np.zeros((1, 1))
    step_rekixa(A, C, Z, X, 0, 0)
    np.testing.assert_array_equal(Z, [[-1.0], [1.0]])
    np.testing.assert_array_equal(X, [[2.0]])


def test_step_rek_z_already_orthogonal():
    A = np.array([[1.0], [1.0]])
    Z = np.array([[1.0], [-1.0]])
    X = np.zeros((1, 1))
    step_rekiax(A, np.zeros((2, 1)), Z, X, 0, 0)
    np.testing.assert_array_equal(Z, [[1.0], [-1.0]])


def test_step_regs_fixed_points():
    A = np.array([[1.0], [1.0]])
    B = np.array([[1.0], [3.0]])
    Y = np.array([[2.0]])
    R = B - A @ Y
    X = np.array([[2.0]])
    step_regsiax(A, B, Y, R, X, 1, 0)
    np.testing.assert_allclose(X, [[2.0]])
    np.testing.assert_allclose(Y, [[2.0]])
    At = A.T
    C = B.T
    Y = np.array([[2.0]])
    R = C - Y @ At
    X = np.array([[2.0]])
    step_regsixa(At, C, Y, R, X, 0, 1)
    np.testing.assert_allclose(X, [[2.0]])


def test_step_regs_identity_tracks(rng):
    B = rng.standard_normal((2, 3))
    Y, X = np.zeros((2, 3)), np.zeros((2, 3))
    R = B.copy()
    step_regsiax(np.eye(2), B, Y, R, X, 0, 0)
    np.testing.assert_array_equal(X[0], B[0])
    C = rng.standard_normal((3, 2))
    Y, X = np.zeros((3, 2)), np.zeros((3, 2))
    R = C.copy()
    step_regsixa(np.eye(2), C, Y, R, X, 1, 1)
    np.testing.assert_array_equal(X[:, 1], C[:, 1])


# ---- problem validation ---------------------------------------------------

def test_problem_validation():
    with pytest.raises(ZeroSliceError):
        ProblemInstance("AX=B", [[1.0, 0.0], [1.0, 0.0]], np.ones((2, 1)))
    with pytest.raises(ValidationError):
        ProblemInstance("AX=B", np.eye(2), np.ones((3, 1)))
    with pytest.raises(ValidationError):
        ProblemInstance("XA=C", np.eye(2), np.ones((1, 3)))
    with pytest.raises(ValidationError):
        ProblemInstance("AX=B", np.eye(2), np.ones((2, 1)), known_solution=np.ones((3, 1)))
    p = ProblemInstance("XA=C", np.ones((2, 3)), np.ones(3))
    assert p.solution_shape == (1, 2)


def test_method_side_mismatch():
    p = ProblemInstance("AX=B", np.eye(2), np.ones((2, 1)))
    with pytest.raises(MethodSideMismatch):
        solve(p, SolverConfig(method="RKCXA"))


def test_config_validation():
    for bad in (dict(tolerance=0), dict(max_iterations=0), dict(trace_stride=0), dict(selection="greedy")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert SolverConfig(selection="random").selection == "randomized"


# ---- solve ----------------------------------------------------------------

def test_identity_cyclic_converges_in_n(rng, backend):
    n = 6
    B = rng.standard_normal((n, 3))
    p = ProblemInstance("AX=B", np.eye(n), B, known_solution=B)
    rep = solve(p, SolverConfig(method="RKCAX", selection="cyclic", tolerance=1e-12), backend=backend)
    assert rep.status is Status.CONVERGED
    assert rep.iterations == n
    assert rep.trace[0].iteration == 0 and rep.trace[0].metric == pytest.approx(1.0)


@pytest.mark.parametrize("method", list(Method))
def test_all_methods_converge_on_full_rank(method, backend):
    side = method.side.value
    # AX=B methods need full column rank for RGS, XA=C methods full row rank
    m, n = (40, 20) if method.side is Side.AXB else (20, 40)
    p = generate_synthetic(SyntheticSpec(m, n, 4, seed=3, side=side))
    rep = solve(p, SolverConfig(method=method, seed=1), backend=backend)
    assert rep.status is Status.CONVERGED, rep.notes
    assert rep.final_metric < 1e-6
    assert rep.trace[-1].iteration == rep.iterations


@pytest.mark.parametrize("pair", [(Method.REKIAX, Method.REGSIAX), (Method.REKIXA, Method.REGSIXA)])
def test_rek_and_regs_share_iterates(pair, backend):
    # the REGS residual B - AY coincides with the REK Z-sequence
    rek, regs = pair
    p = generate_synthetic(SyntheticSpec(20, 12, 3, consistency="inconsistent", noise_scale=1e-2, seed=5,
                                         side=rek.side.value))
    a = solve(p, SolverConfig(method=rek, seed=9, max_iterations=3000), backend=backend)
    b = solve(p, SolverConfig(method=regs, seed=9, max_iterations=3000), backend=backend)
    assert a.iterations == b.iterations
    np.testing.assert_allclose(a.X, b.X, rtol=0, atol=1e-10)


def test_backends_agree(backend):
    from kacz import _backend

    if len(_backend.available()) < 2:
        pytest.skip("compiled extension not built")
    for method in Method:
        p = generate_synthetic(SyntheticSpec(12, 12, 3, rank_mode="half_cols", seed=4, side=method.side.value))
        cfg = SolverConfig(method=method, seed=2, max_iterations=700, trace_stride=50, stall_window=0)
        a = solve(p, cfg, backend="compiled")
        b = solve(p, cfg, backend="python")
        np.testing.assert_allclose(a.X, b.X, rtol=0, atol=1e-12)
        assert a.counters == b.counters
        assert [r.iteration for r in a.trace] == [r.iteration for r in b.trace]
        np.testing.assert_allclose([r.metric for r in a.trace], [r.metric for r in b.trace], rtol=1e-10)
        for key in a.aux:
            np.testing.assert_allclose(a.aux[key], b.aux[key], atol=1e-12)


def test_sparse_and_dense_storage_agree(rng):
    A = rng.standard_normal((15, 8)) * (rng.random((15, 8)) < 0.5)
    A[np.arange(15), np.arange(15) % 8] = 1.0
    B = A @ rng.standard_normal((8, 2))
    cfg = SolverConfig(method="REKIAX", seed=5, max_iterations=300, stall_window=0)
    a = solve(ProblemInstance("AX=B", A, B, known_solution=oracle.min_norm_solution(A, B)), cfg)
    b = solve(ProblemInstance("AX=B", SparseMatrix.from_dense(A), B, known_solution=oracle.min_norm_solution(A, B)), cfg)
    np.testing.assert_allclose(a.X, b.X, atol=1e-12)
    assert b.counters.fma < a.counters.fma


def test_xa_duality_with_transposed_problem(rng, backend):
    A = rng.standard_normal((9, 14))
    C = rng.standard_normal((3, 9)) @ A
    cfg_x = SolverConfig(method="RKCXA", seed=8, max_iterations=400, stall_window=0)
    cfg_a = SolverConfig(method="RKCAX", seed=8, max_iterations=400, stall_window=0)
    rx = solve(ProblemInstance("XA=C", A, C, known_solution=oracle.min_norm_solution(A, C, "XA=C")), cfg_x, backend=backend)
    ra = solve(ProblemInstance("AX=B", A.T, C.T, known_solution=oracle.min_norm_solution(A.T, C.T)), cfg_a, backend=backend)
    np.testing.assert_allclose(rx.X, ra.X.T, atol=1e-12)
    assert rx.iterations == ra.iterations


def test_residual_metric_used_without_reference(backend):
    p = generate_synthetic(SyntheticSpec(30, 15, 2, seed=2))
    p = ProblemInstance(p.side, p.A, p.rhs)
    rep = solve(p, SolverConfig(method="RKCAX", seed=1), backend=backend)
    assert rep.metric == "residual_projection"
    assert any("not relative error" in n for n in rep.notes)
    assert rep.status is Status.CONVERGED


def test_nrmse_metric(backend):
    p = generate_synthetic(SyntheticSpec(30, 15, 2, seed=2))
    re = solve(p, SolverConfig(method="RKCAX", seed=1, max_iterations=200), backend=backend)
    nr = solve(p, SolverConfig(method="RKCAX", seed=1, max_iterations=200, stop_metric="nrmse"), backend=backend)
    assert nr.final_metric == pytest.approx(np.sqrt(re.final_metric), rel=1e-12)


def test_max_iterations_status(backend):
    p = generate_synthetic(SyntheticSpec(30, 15, 2, seed=2))
    rep = solve(p, SolverConfig(method="RKCAX", seed=1, max_iterations=25), backend=backend)
    assert rep.status is Status.MAX_ITERATIONS and rep.iterations == 25


def test_stagnation_reported_as_diverged(backend):
    # rank-deficient columns: coordinate descent cannot reach the minimal-norm solution
    p = generate_synthetic(SyntheticSpec(20, 10, 2, rank_mode="half_cols", seed=1))
    rep = solve(p, SolverConfig(method="RGSIAX", seed=1, stall_window=2000, max_iterations=50000), backend=backend)
    assert rep.status is Status.DIVERGED
    assert rep.iterations < 50000


def test_divergence_threshold(backend):
    p = generate_synthetic(SyntheticSpec(20, 10, 2, seed=1))
    rep = solve(p, SolverConfig(method="RKCAX", divergence_threshold=0.5, seed=0), x0=np.full((10, 2), 50.0), backend=backend)
    assert rep.status is Status.DIVERGED and rep.iterations == 0


def test_range_invariant_of_rkcax_iterates(rng):
    A = np.hstack([rng.standard_normal((12, 4))] * 2)
    B = A @ rng.standard_normal((8, 3))
    P = oracle.pinv(A)
    p = ProblemInstance("AX=B", A, B, known_solution=P @ B)
    for k in (1, 7, 40):
        X = solve(p, SolverConfig(method="RKCAX", seed=3, max_iterations=k)).X
        assert np.linalg.norm(X - P @ A @ X) <= 1e-8 * np.linalg.norm(X)


def test_inconsistent_note_on_rk():
    p = generate_synthetic(SyntheticSpec(20, 10, 2, consistency="inconsistent", noise_scale=1e-3, seed=1))
    rep = solve(p, SolverConfig(method="RKCAX", max_iterations=10))
    assert any("inconsistent" in n for n in rep.notes)


def test_counters_per_iteration_rkcax():
    p = generate_synthetic(SyntheticSpec(20, 10, 3, seed=1))
    rep = solve(p, SolverConfig(method="RKCAX", max_iterations=100, trace_stride=1000, tolerance=1e-300))
    metric_cost = 2 * (10 * 3)  # initial and final RE evaluation
    assert rep.counters.fma == 100 * (2 * 10 * 3 + 3) + metric_cost
    assert rep.counters.div == 100


def test_compute_inverse_examples(backend):
    cfg = SolverConfig(tolerance=1e-12, max_iterations=20000, seed=1)
    for kind in ("right", "left", "moore_penrose"):
        rep = compute_inverse(np.eye(3), kind, cfg, backend=backend)
        np.testing.assert_allclose(rep.X, np.eye(3), atol=1e-5)
    rep = compute_inverse(np.array([[1.0, 1.0]]), "right", cfg, backend=backend)
    np.testing.assert_allclose(rep.X, [[0.5], [0.5]], atol=1e-6)
    rep = compute_inverse(np.ones((2, 2)), "moore_penrose", cfg, backend=backend)
    np.testing.assert_allclose(rep.X, np.full((2, 2), 0.25), atol=1e-5)
    rep = compute_inverse(np.ones((2, 2)), "moore_penrose", SolverConfig(method="REGSIXA", tolerance=1e-12, seed=1))
    assert rep.method is Method.REGSIXA
    np.testing.assert_allclose(rep.X, np.full((2, 2), 0.25), atol=1e-5)
    with pytest.raises(ValueError):
        compute_inverse(np.eye(2), "middle")


def test_counters_passed_to_steps():
    c = KernelCounters()
    step_rkcax(np.eye(2), np.ones((2, 2)), np.zeros((2, 2)), 0, counters=c)
    assert c.div == 1 and c.fma > 0
