import numpy as np
import pytest

from kacz.matcore import (
    DenseMatrix,
    DimensionMismatch,
    KernelCounters,
    MatrixError,
    SparseMatrix,
    ZeroSliceError,
    axis_sq_norms,
    frobenius_sq,
    rank_one_accumulate,
    slice_contract,
)


@pytest.mark.parametrize(
    "M, expected",
    [([[3.0, 4.0]], 25.0), (np.eye(3), 3.0), ([[1.0, 2.0], [2.0, 2.0]], 13.0)],
)
def test_frobenius_sq(M, expected):
    assert frobenius_sq(M) == expected
    assert frobenius_sq(SparseMatrix.from_dense(M)) == expected


def test_axis_sq_norms_examples():
    M = [[1.0, 2.0], [2.0, 2.0]]
    np.testing.assert_array_equal(axis_sq_norms(M, "row"), [5.0, 8.0])
    np.testing.assert_array_equal(axis_sq_norms(M, "col"), [5.0, 8.0])
    np.testing.assert_array_equal(axis_sq_norms(np.eye(2), "row"), [1.0, 1.0])


def test_axis_sq_norms_zero_slice_reports_indices():
    with pytest.raises(ZeroSliceError) as exc:
        axis_sq_norms([[1.0, 0.0], [2.0, 0.0]], "col")
    assert exc.value.indices == [1]
    with pytest.raises(ZeroSliceError):
        axis_sq_norms(SparseMatrix.from_coo((3, 2), [0, 2], [0, 1], [1.0, 1.0]), "row")


def test_slice_contract_examples():
    np.testing.assert_array_equal(slice_contract([[1.0, 2.0]], 0, "row", np.array([[1.0, 1.0], [1.0, 0.0]])), [3, 1])
    np.testing.assert_array_equal(slice_contract(np.eye(2), 1, "row", np.array([[5.0, 6.0], [7.0, 8.0]])), [7, 8])
    np.testing.assert_array_equal(slice_contract([[1.0], [1.0]], 0, "col", np.array([[1.0], [3.0]])), [4])


def test_slice_contract_errors():
    with pytest.raises(IndexError):
        slice_contract(np.eye(2), 2, "row", np.ones((2, 1)))
    with pytest.raises(DimensionMismatch):
        slice_contract(np.eye(2), 0, "row", np.ones((3, 1)))


def test_slice_contract_sparse_counts_only_stored_entries():
    A = SparseMatrix.from_coo((3, 50), [0, 0, 1, 2], [3, 40, 7, 9], [1.0, -2.0, 3.0, 4.0])
    M = np.arange(150.0).reshape(50, 3)
    c = KernelCounters()
    out = slice_contract(A, 0, "row", M, c)
    np.testing.assert_array_equal(out, M[3] - 2 * M[40])
    assert c.fma == 2 * 3


def test_rank_one_accumulate_examples():
    M = np.zeros((2, 2))
    rank_one_accumulate(M, [0.0, 1.0], [2.0, 2.0], 1.0)
    np.testing.assert_array_equal(M, [[0, 0], [2, 2]])
    before = M.copy()
    rank_one_accumulate(M, [1.0, 1.0], [1.0, 1.0], 0.0)
    np.testing.assert_array_equal(M, before)
    M = np.eye(2)
    rank_one_accumulate(M, [1.0, 0.0], [1.0, 0.0], -1.0)
    np.testing.assert_array_equal(M, [[0, 0], [0, 1]])


def test_rank_one_accumulate_single_slice_targets():
    M = np.zeros((3, 2))
    c = KernelCounters()
    rank_one_accumulate(M, None, [1.0, 2.0], 2.0, target="row", index=1, counters=c)
    rank_one_accumulate(M, [1.0, 1.0, 1.0], None, 1.0, target="col", index=0, counters=c)
    np.testing.assert_array_equal(M, [[1, 0], [3, 4], [1, 0]])
    assert c.fma == 2 + 3
    with pytest.raises(DimensionMismatch):
        rank_one_accumulate(M, [1.0], [1.0, 1.0], 1.0)


def test_dense_matrix_validation_and_immutability():
    with pytest.raises(MatrixError):
        DenseMatrix([[np.nan, 1.0]])
    D = DenseMatrix([[1.0, 2.0], [3.0, 4.0]])
    assert D.nnz == 4
    with pytest.raises(ValueError):
        D.row_val[0] = 5.0
    np.testing.assert_array_equal(D.T.to_dense(), [[1, 3], [2, 4]])


def test_sparse_validation():
    with pytest.raises(MatrixError):
        SparseMatrix((2, 2), [0, 2, 2], [1, 0], [1.0, 1.0])  # indices not increasing
    with pytest.raises(MatrixError):
        SparseMatrix((2, 2), [0, 1, 2], [0, 1], [0.0, 1.0])  # stored zero
    with pytest.raises(MatrixError):
        SparseMatrix((2, 2), [0, 1, 1], [0], [np.inf])
    with pytest.raises(MatrixError):
        SparseMatrix((2, 2), [0, 1], [0], [1.0])


def test_sparse_from_coo_sums_duplicates_and_drops_cancellations():
    S = SparseMatrix.from_coo((2, 3), [0, 0, 1, 1, 1], [2, 2, 0, 1, 1], [1.0, 2.0, 5.0, 1.0, -1.0])
    np.testing.assert_array_equal(S.to_dense(), [[0, 0, 3], [5, 0, 0]])
    assert S.nnz == 2


def test_sparse_dense_roundtrip_and_mirror(rng):
    A = rng.standard_normal((7, 5)) * (rng.random((7, 5)) < 0.4)
    S = SparseMatrix.from_dense(A)
    np.testing.assert_array_equal(S.to_dense(), A)
    np.testing.assert_array_equal(S.T.to_dense(), A.T)
    for j in range(5):
        idx, val = S.col(j)
        np.testing.assert_array_equal(val, A[idx, j])
        assert np.count_nonzero(A[:, j]) == idx.size


def test_counters_reset():
    c = KernelCounters(fma=3, div=2)
    assert c.as_dict() == {"fma": 3, "div": 2}
    c.reset()
    assert c.as_dict() == {"fma": 0, "div": 0}
