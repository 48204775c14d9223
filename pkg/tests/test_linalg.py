"""Kernel-level tests: CSR products, GMRES, ILU, incremental QR, cond2."""

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import LinAlgError

from imexrb import linalg as la


def laplacian_2d(n_interior):
    """5-point Laplacian on an n x n interior grid (negative definite)."""
    T = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1],
                 shape=(n_interior, n_interior))
    eye = sp.identity(n_interior)
    return la.as_csr(sp.kron(T, eye) + sp.kron(eye, T))


def principal_angle_sines(Q1, Q2):
    """Largest sine of the principal angles between equal-rank spans."""
    return np.linalg.svd(Q2 - Q1 @ (Q1.T @ Q2), compute_uv=False).max()


class TestSpmv:
    def test_identity(self):
        A = la.as_csr(sp.identity(3))
        assert np.array_equal(la.spmv(A, np.array([1.0, 2.0, 3.0])),
                              np.array([1.0, 2.0, 3.0]))

    def test_zero_matrix(self):
        A = la.as_csr(sp.csr_matrix((4, 4)))
        assert np.array_equal(la.spmv(A, np.ones(4)), np.zeros(4))

    def test_random_matches_dense_oracle(self):
        rng = np.random.default_rng(11)
        A = sp.random(20, 20, density=0.35, random_state=7, format="csr")
        x = rng.standard_normal(20)
        expected = A.toarray() @ x
        got = la.spmv(la.as_csr(A), x)
        assert np.linalg.norm(got - expected) <= 1e-13 * np.linalg.norm(expected)

    def test_dimension_mismatch(self):
        A = la.as_csr(sp.identity(3))
        with pytest.raises(ValueError, match="dimension mismatch"):
            la.spmv(A, np.ones(4))


class TestGmres:
    def test_identity_converges_immediately(self):
        x, iters, ok = la.gmres(la.as_csr(sp.identity(2)), np.array([4.0, 5.0]))
        assert ok and iters <= 1
        assert np.allclose(x, [4.0, 5.0], atol=1e-12)

    def test_diagonal_solve(self):
        A = la.as_csr(sp.diags(np.arange(1.0, 11.0)))
        x, iters, ok = la.gmres(A, np.ones(10), rtol=1e-12)
        assert ok
        assert np.abs(x - 1.0 / np.arange(1.0, 11.0)).max() <= 1e-10

    def test_laplacian_matches_dense_lu_oracle(self):
        A = laplacian_2d(9)
        b = np.ones(81)
        expected = np.linalg.solve(A.toarray(), b)
        x, iters, ok = la.gmres(A, b, rtol=1e-12)
        assert ok and iters <= 81
        assert np.abs(x - expected).max() <= 1e-8

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_converged_implies_residual_contract(self, seed):
        rng = np.random.default_rng(seed)
        A = la.as_csr(sp.random(40, 40, density=0.2,
                                random_state=seed) + 4 * sp.identity(40))
        b = rng.standard_normal(40)
        rtol = 1e-9
        x, _, ok = la.gmres(A, b, rtol=rtol)
        assert ok
        assert np.linalg.norm(b - A @ x) <= rtol * np.linalg.norm(b) * (1 + 1e-9)

    def test_zero_rhs(self):
        x, iters, ok = la.gmres(la.as_csr(sp.identity(3)), np.zeros(3))
        assert ok and iters == 0 and np.array_equal(x, np.zeros(3))

    def test_breakdown_distinct_from_nonconvergence(self):
        # singular operator: Krylov space exhausts without convergence
        A = la.as_csr(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(la.GmresBreakdownError):
            la.gmres(A, np.array([1.0, 1.0]), rtol=1e-10)

    def test_nonconvergence_reported_via_flag(self):
        A = laplacian_2d(9)
        _, iters, ok = la.gmres(A, np.ones(81), rtol=1e-14, maxit=3)
        assert not ok and iters == 3


class TestIlu:
    def test_diagonal_exact(self):
        A = la.as_csr(sp.diags([2.0, 4.0, 8.0]))
        ilu = la.ilu_factor(A, 5e-3)
        v = np.array([2.0, 4.0, 8.0])
        assert np.allclose(ilu.apply(v), np.ones(3), atol=1e-14)

    def test_zero_droptol_complete_factorization_of_band(self):
        n = 30
        A = la.as_csr(sp.diags([np.ones(n - 1), 4.0 * np.ones(n),
                                np.ones(n - 1)], [-1, 0, 1]))
        ilu = la.ilu_factor(A, 0.0)
        defect = 0.0
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            col = ilu.apply(A @ e)
            col[j] -= 1.0
            defect = max(defect, np.abs(col).max())
        assert defect <= 1e-12

    def test_preconditioning_reduces_iterations(self):
        A = laplacian_2d(7)  # 49x49
        b = np.ones(A.shape[0])
        _, it_plain, ok_plain = la.gmres(A, b, rtol=1e-10)
        ilu = la.ilu_factor(A, 5e-3)
        _, it_prec, ok_prec = la.gmres(A, b, precond=ilu, rtol=1e-10)
        assert ok_plain and ok_prec
        assert it_prec < it_plain

    def test_zero_pivot_names_row(self):
        A = sp.lil_matrix((3, 3))
        A[0, 0] = 1.0
        A[2, 2] = 1.0
        with pytest.raises(la.ZeroPivotError, match="row 1"):
            la.ilu_factor(la.as_csr(A), 0.0)

    def test_transpose_apply(self):
        A = la.as_csr(np.array([[2.0, 1.0], [0.0, 3.0]]))
        ilu = la.ilu_factor(A, 0.0)
        v = np.array([1.0, 1.0])
        assert np.allclose(ilu.transpose().apply(v),
                           np.linalg.solve(A.toarray().T, v), atol=1e-12)


class TestQrInit:
    def test_simple_column(self):
        f = la.qr_init(np.array([3.0, 4.0]))
        assert np.allclose(f.q.ravel(), [0.6, 0.8])
        assert np.allclose(f.r, [[5.0]])

    def test_zero_vector_falls_back_to_e1(self):
        f = la.qr_init(np.zeros(5))
        e1 = np.zeros(5)
        e1[0] = 1.0
        assert np.array_equal(f.q.ravel(), e1)

    def test_random_reconstruction(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal(25)
        f = la.qr_init(v)
        assert abs(f.q[:, 0] @ f.q[:, 0] - 1.0) <= 1e-13
        assert np.linalg.norm((f.q @ f.r).ravel() - v) <= 1e-13 * np.linalg.norm(v)


class TestQrAppend:
    def test_collinear_vector_skipped(self):
        f = la.qr_init(np.array([1.0, 2.0, 2.0]))
        f2, inserted = la.qr_append(f, np.array([2.0, 4.0, 4.0]), 1e-8)
        assert not inserted
        assert f2.m == 1

    def test_orthogonal_vector_inserted(self):
        f = la.qr_init(np.array([1.0, 0.0]))
        f2, inserted = la.qr_append(f, np.array([0.0, 1.0]), 1e-8)
        assert inserted
        assert np.allclose(f2.q, np.eye(2), atol=1e-14)

    def test_sequential_appends_match_dense_qr_span(self):
        rng = np.random.default_rng(5)
        n = 40
        snapshots = [rng.standard_normal(n)]
        f = la.qr_init(snapshots[0])
        for _ in range(9):
            v = rng.standard_normal(n)
            snapshots.append(v)
            f, inserted = la.qr_append(f, v, 1e-8)
            assert inserted
        oracle_q = np.linalg.qr(np.array(snapshots).T)[0]
        assert principal_angle_sines(oracle_q, f.q) <= 1e-8
        assert f.orthonormality_defect() <= 1e-10 * f.m

    def test_length_mismatch(self):
        f = la.qr_init(np.ones(3))
        with pytest.raises(ValueError):
            la.qr_append(f, np.ones(4), 1e-8)


class TestQrDeleteFirst:
    def test_span_tracks_remaining_snapshots(self):
        rng = np.random.default_rng(9)
        n = 30
        snaps = [rng.standard_normal(n) for _ in range(6)]
        f = la.qr_init(snaps[0])
        for v in snaps[1:]:
            f, _ = la.qr_append(f, v, 1e-8)
        f = la.qr_delete_first(f)
        oracle_q = np.linalg.qr(np.array(snaps[1:]).T)[0]
        assert principal_angle_sines(oracle_q, f.q) <= 1e-8
        assert f.orthonormality_defect() <= 1e-10 * f.m

    def test_single_column_refused(self):
        with pytest.raises(ValueError):
            la.qr_delete_first(la.qr_init(np.ones(4)))


class TestOrthResidual:
    def test_in_span_gives_zero_ratio(self):
        Q = np.eye(4)[:, :2]
        r, ratio = la.orth_residual(Q, 3.0 * Q[:, 0] - 2.0 * Q[:, 1])
        assert ratio <= 1e-12

    def test_orthogonal_gives_unit_ratio(self):
        Q = np.eye(2)[:, :1]
        r, ratio = la.orth_residual(Q, np.array([0.0, 1.0]))
        assert ratio == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(r, [0.0, 1.0])

    def test_zero_vector_ratio_zero(self):
        _, ratio = la.orth_residual(np.eye(3)[:, :1], np.zeros(3))
        assert ratio == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_pythagoras(self, seed):
        rng = np.random.default_rng(seed)
        Q = np.linalg.qr(rng.standard_normal((50, 7)))[0]
        u = rng.standard_normal(50)
        r, _ = la.orth_residual(Q, u)
        lhs = np.linalg.norm(u) ** 2
        rhs = np.linalg.norm(Q.T @ u) ** 2 + np.linalg.norm(r) ** 2
        assert abs(lhs - rhs) <= 1e-10 * lhs


class TestGsExtend:
    def test_empty_basis(self):
        Q = np.zeros((2, 0))
        out = la.gs_extend(Q, np.array([0.0, 2.0]))
        assert np.allclose(out, [[0.0], [1.0]])

    def test_unit_vectors(self):
        out = la.gs_extend(np.eye(2)[:, :1], np.array([0.0, 1.0]))
        assert np.allclose(out, np.eye(2), atol=1e-14)

    def test_zero_residual_rejected(self):
        with pytest.raises(ValueError):
            la.gs_extend(np.eye(3)[:, :1], np.zeros(3))

    def test_thirty_sequential_extensions_stay_orthonormal(self):
        rng = np.random.default_rng(21)
        n = 60
        Q = np.zeros((n, 0))
        for _ in range(30):
            r, _ = la.orth_residual(Q, rng.standard_normal(n))
            Q = la.gs_extend(Q, r)
        defect = np.linalg.norm(Q.T @ Q - np.eye(30), "fro")
        assert defect <= 1e-10


class TestDenseSolve:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0])
        assert np.array_equal(la.dense_solve(np.eye(3), b), b)

    def test_diagonal(self):
        x = la.dense_solve(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
        assert np.allclose(x, [1.0, 1.0], atol=1e-15)

    def test_random_spd_residual(self):
        rng = np.random.default_rng(13)
        M = rng.standard_normal((40, 40))
        M = M @ M.T + 40.0 * np.eye(40)
        b = rng.standard_normal(40)
        x = la.dense_solve(M, b)
        assert np.linalg.norm(M @ x - b) <= 1e-12 * np.linalg.norm(b)

    def test_singular_raises(self):
        with pytest.raises(LinAlgError):
            la.dense_solve(np.zeros((2, 2)), np.ones(2))


class TestCond2Estimate:
    def test_identity(self):
        assert la.cond2_estimate(la.as_csr(sp.identity(3)), 1e-2) == \
            pytest.approx(1.0, rel=1e-6)

    def test_diag_1_10(self):
        A = la.as_csr(sp.diags([1.0, 10.0]))
        assert la.cond2_estimate(A, 1e-2) == pytest.approx(10.0, rel=1e-2)

    @pytest.mark.parametrize("seed,n", [(0, 80), (1, 150), (2, 200)])
    def test_matches_dense_svd_oracle(self, seed, n):
        A = sp.random(n, n, density=0.1, random_state=seed,
                      format="csr") + 3.0 * sp.identity(n)
        est = la.cond2_estimate(la.as_csr(A), 1e-2, seed=seed)
        sv = np.linalg.svd(A.toarray(), compute_uv=False)
        truth = sv[0] / sv[-1]
        assert abs(est - truth) <= 0.15 * truth

    def test_singular_raises(self):
        A = sp.lil_matrix((3, 3))
        A[0, 0] = 1.0
        A[1, 1] = 1.0
        A[2, 0] = 1.0  # rank deficient, no zero rows
        with pytest.raises(ValueError):
            la.cond2_estimate(la.as_csr(A), 1e-2)
