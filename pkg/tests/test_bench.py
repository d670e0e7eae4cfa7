import numpy as np
import pytest

from kacz.bench import ExperimentPlan, MatrixSource, format_table, run_experiment, table_csv
from kacz.dataio import SyntheticSpec, read_trace
from kacz.solvers import SolverConfig


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan(SyntheticSpec(4, 4, 1), ["RKCAX"], trials=0)
    with pytest.raises(ValueError):
        ExperimentPlan(SyntheticSpec(4, 4, 1), [])
    with pytest.raises(ValueError):
        ExperimentPlan(SyntheticSpec(4, 4, 1), ["RKXYZ"])


def test_table_is_deterministic():
    plan = ExperimentPlan(SyntheticSpec(20, 10, 3), ["RKCAX", "REKIXA"], trials=2, config=SolverConfig(seed=9))
    a = run_experiment(plan)
    b = run_experiment(plan)
    assert [r.iterations for r in a] == [r.iterations for r in b]
    assert [r.marker for r in a] == [r.marker for r in b]


def test_trial_reproduces_single_solve():
    from dataclasses import replace

    from kacz.dataio import generate_synthetic
    from kacz.solvers import solve

    spec = SyntheticSpec(20, 10, 3)
    rows = run_experiment(ExperimentPlan(spec, ["RKCAX"], trials=3, config=SolverConfig(seed=40)))
    for t, it in enumerate(rows[0].iterations):
        rep = solve(generate_synthetic(replace(spec, seed=40 + t)), SolverConfig(method="RKCAX", seed=40 + t))
        assert rep.iterations == it


def test_markers_for_non_convergence():
    spec = SyntheticSpec(20, 10, 3, rank_mode="half_cols")
    rows = run_experiment(
        ExperimentPlan(spec, ["RGSIAX", "RKCAX"], trials=2, config=SolverConfig(max_iterations=30000, stall_window=3000))
    )
    assert rows[0].marker == "-" and rows[0].converged == 0 and rows[0].diverged == 2
    capped = run_experiment(ExperimentPlan(spec, ["RKCAX"], trials=2, config=SolverConfig(max_iterations=5)))
    assert capped[0].marker == ">" and capped[0].capped == 2
    assert rows[1].marker.isdigit()


def test_failed_method_does_not_abort_table():
    # half_cols with odd n fails inside the trial; the next method still runs
    src = MatrixSource(matrix=np.eye(3), label="eye3")
    rows = run_experiment(ExperimentPlan(src, ["RKCAX", "RKCXA"], trials=1))
    assert all(r.converged == 1 for r in rows)

    class Broken(MatrixSource):
        def load(self):
            raise OSError("gone")

    rows = run_experiment(ExperimentPlan(Broken(path="missing.mtx"), ["RKCAX", "RKCXA"], trials=2))
    assert [r.marker for r in rows] == ["err", "err"]


def test_traces_and_outputs(tmp_path):
    plan = ExperimentPlan(SyntheticSpec(15, 8, 2), ["RKCAX", "RKCXA"], trials=2, output_dir=str(tmp_path / "tr"))
    rows = run_experiment(plan)
    files = sorted(p.name for p in (tmp_path / "tr").iterdir())
    assert len(files) == 4 and all(f.endswith(".csv") for f in files)
    tr = read_trace(str(tmp_path / "tr" / files[0]))
    assert tr[0].iteration == 0
    text = format_table(rows)
    assert text.splitlines()[0].split() == ["instance", "method", "IT", "CPU", "converged"]
    csv = table_csv(rows).splitlines()
    assert csv[0].startswith("instance,method,IT,CPU,converged") and len(csv) == 3


def test_workers_give_same_iterations():
    plan = ExperimentPlan(SyntheticSpec(15, 8, 2), ["RKCAX"], trials=3)
    par = ExperimentPlan(SyntheticSpec(15, 8, 2), ["RKCAX"], trials=3, workers=2)
    assert run_experiment(plan)[0].iterations == run_experiment(par)[0].iterations
