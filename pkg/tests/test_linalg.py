import numpy as np
import pytest
from numpy.testing import assert_allclose

from sdeident.exceptions import RepeatedEigenvaluesError
from sdeident.linalg import (
    kron_product,
    kron_sum,
    krylov_columns,
    matexp,
    numerical_rank,
    real_block_eigen,
    unvec,
    vec,
)

from conftest import random_orthogonal

A_ID = np.array([[1.76, -0.1], [0.98, 0.0]])


def taylor_expm(M, t, terms=20):
    """Truncated power-series oracle, independent of the production path."""
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        term = term @ (M * t) / k
        out = out + term
    return out


class TestMatexp:
    def test_zero_time_is_identity(self):
        M = np.array([[3.0, 1.0], [0.5, -2.0]])
        assert_allclose(matexp(M, 0.0), np.eye(2), rtol=0, atol=0)

    def test_diagonal(self):
        out = matexp(np.diag([1.0, 2.0]), 1.0)
        assert_allclose(out, np.diag([np.e, np.e**2]), rtol=1e-14)

    def test_against_taylor_series(self):
        got = matexp(A_ID, 1.0)
        want = taylor_expm(A_ID, 1.0)
        assert np.max(np.abs(got - want)) < 1e-10

    def test_semigroup_property(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            d = rng.integers(2, 5)
            M = rng.standard_normal((d, d))
            s, t = rng.uniform(-2, 2, size=2)
            lhs = matexp(M, s + t)
            rhs = matexp(M, s) @ matexp(M, t)
            assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * np.abs(rhs).max())

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            matexp(np.zeros((2, 3)), 1.0)


class TestKron:
    def test_identity_gives_block_diagonal(self):
        N = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = kron_product(np.eye(2), N)
        want = np.zeros((4, 4))
        want[:2, :2] = N
        want[2:, 2:] = N
        assert_allclose(out, want)

    def test_hand_expansion(self):
        out = kron_product([[1.0, 2.0]], [[3.0], [4.0]])
        assert out.shape == (2, 2)
        assert_allclose(out, [[3.0, 6.0], [4.0, 8.0]])

    def test_vec_identity(self):
        # kron(B^T, A) vec(X) = vec(A X B)
        rng = np.random.default_rng(7)
        for _ in range(20):
            A, X, B = (rng.standard_normal((3, 3)) for _ in range(3))
            lhs = kron_product(B.T, A) @ vec(X)
            rhs = vec(A @ X @ B)
            assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_kron_sum_zero(self):
        assert_allclose(kron_sum(np.zeros((2, 2)), np.zeros((2, 2))), np.zeros((4, 4)))

    def test_kron_sum_eigenvalues_add(self):
        M = np.diag([1.0, 2.0])
        ev = np.sort(np.linalg.eigvals(kron_sum(M, M)).real)
        assert_allclose(ev, [2.0, 3.0, 3.0, 4.0], atol=1e-12)

    def test_kron_sum_matches_flow_derivative(self):
        # d/dt vec(e^{Mt} C e^{N^T t}) at t=0 == kron_sum(N, M) @ vec(C)
        rng = np.random.default_rng(11)
        for _ in range(10):
            M, N, C = (rng.standard_normal((2, 2)) for _ in range(3))
            h = 1e-6
            f = lambda t: vec(matexp(M, t) @ C @ matexp(N, t).T)
            fd = (f(h) - f(-h)) / (2 * h)
            assert_allclose(fd, kron_sum(N, M) @ vec(C), rtol=1e-6, atol=1e-8)

    def test_kron_sum_dim_mismatch(self):
        with pytest.raises(ValueError):
            kron_sum(np.eye(2), np.eye(3))


class TestVec:
    def test_column_major(self):
        assert_allclose(vec([[1.0, 2.0], [3.0, 4.0]]), [1.0, 3.0, 2.0, 4.0])

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        M = rng.standard_normal((3, 4))
        assert_allclose(unvec(vec(M), 3, 4), M)

    def test_outer_product(self):
        x0 = np.array([1.0, -1.0])
        assert_allclose(vec(np.outer(x0, x0)), [1.0, -1.0, -1.0, 1.0])

    def test_unvec_size_mismatch(self):
        with pytest.raises(ValueError):
            unvec(np.arange(5.0), 2, 2)


class TestNumericalRank:
    def test_zero_matrix(self):
        rank, sv = numerical_rank(np.zeros((2, 6)))
        assert rank == 0

    def test_unidentifiable_pair_is_rank_one(self):
        # A x0 = -x0 for this drift/state pair, so the Krylov matrix collapses
        A = np.array([[1.0, 2.0], [1.0, 0.0]])
        x0 = np.array([1.0, -1.0])
        rank, _ = numerical_rank(np.column_stack([x0, A @ x0]))
        assert rank == 1

    def test_identifiable_pair_is_full_rank(self):
        x0 = np.array([1.87, -0.98])
        Ax0 = A_ID @ x0
        # determinant oracle: 1.87*1.8326 + 0.98*3.3892 = 6.748378 != 0
        M = np.column_stack([x0, Ax0])
        assert abs(np.linalg.det(M) - 6.748378) < 1e-6
        rank, _ = numerical_rank(M)
        assert rank == 2

    def test_invariance_under_permutation_and_rotation(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            M = rng.standard_normal((4, 6))
            M[:, 3] = M[:, 0] + M[:, 1]  # force deficiency in the column space
            base, _ = numerical_rank(M)
            perm = rng.permutation(6)
            r_perm, _ = numerical_rank(M[:, perm])
            Q = random_orthogonal(rng, 4)
            r_rot, _ = numerical_rank(Q @ M)
            assert base == r_perm == r_rot

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError):
            numerical_rank(np.zeros((0, 2)))


class TestRealBlockEigen:
    def test_diagonal(self):
        eig = real_block_eigen(np.diag([1.0, 2.0]))
        assert eig.n_real == eig.n_blocks == 2
        assert eig.blocks == (1.0, 2.0)
        assert_allclose(np.abs(eig.Q), np.eye(2), atol=1e-14)

    def test_rotation_matrix(self):
        eig = real_block_eigen(np.array([[0.0, -1.0], [1.0, 0.0]]))
        assert eig.n_real == 0 and eig.n_blocks == 1
        blk = eig.blocks[0]
        assert_allclose(blk, [[0.0, -1.0], [1.0, 0.0]], atol=1e-12)

    def test_reassembly_random(self):
        rng = np.random.default_rng(23)
        done = 0
        while done < 200:
            M = rng.standard_normal((3, 3))
            try:
                eig = real_block_eigen(M)
            except RepeatedEigenvaluesError:
                continue
            assert np.max(np.abs(eig.reassemble() - M)) < 1e-10 * max(
                1.0, np.abs(M).max()
            )
            done += 1

    def test_reassembly_error_bound_bulk(self):
        # spec invariant: 1000 random matrices with eigenvalue gaps > 0.1
        rng = np.random.default_rng(29)
        done = 0
        while done < 1000:
            M = rng.standard_normal((3, 3)) * 2.0
            w = np.linalg.eigvals(M)
            gaps = np.abs(w[:, None] - w[None, :])[np.triu_indices(3, k=1)]
            if gaps.min() <= 0.1:
                continue
            eig = real_block_eigen(M)
            err = np.linalg.norm(eig.reassemble() - M)
            assert err <= 1e-8 * np.linalg.norm(M)
            done += 1

    def test_repeated_eigenvalues_raise(self):
        with pytest.raises(RepeatedEigenvaluesError):
            real_block_eigen(np.eye(2))
        with pytest.raises(RepeatedEigenvaluesError):
            real_block_eigen(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_deterministic(self):
        M = np.array([[0.3, -1.2, 0.1], [1.1, 0.2, 0.0], [0.0, 0.4, -0.9]])
        e1 = real_block_eigen(M)
        e2 = real_block_eigen(M)
        assert_allclose(e1.Q, e2.Q, rtol=0, atol=0)


class TestKrylovColumns:
    def test_depth_one_concatenates_seeds(self):
        A = np.eye(2)
        out = krylov_columns(A, [np.array([1.0, 0.0]), np.array([0.0, 2.0])], 1)
        assert_allclose(out, [[1.0, 0.0], [0.0, 2.0]])

    def test_hand_multiply(self):
        A = np.array([[1.0, 2.0], [1.0, 0.0]])
        out = krylov_columns(A, [np.array([1.0, -1.0])], 2)
        assert_allclose(out, np.column_stack([[1.0, -1.0], [-1.0, 1.0]]))

    def test_controllability_layout(self):
        rng = np.random.default_rng(31)
        A = rng.standard_normal((3, 3))
        G = rng.standard_normal((3, 2))
        out = krylov_columns(A, [G[:, 0], G[:, 1]], 3)
        want = np.column_stack(
            [G[:, 0], A @ G[:, 0], A @ A @ G[:, 0], G[:, 1], A @ G[:, 1], A @ A @ G[:, 1]]
        )
        assert_allclose(out, want)

    def test_depth_zero_rejected(self):
        with pytest.raises(ValueError):
            krylov_columns(np.eye(2), [np.ones(2)], 0)


def test_span_equality_of_loading_and_covariance_krylov():
    # rank([G|AG|...]) == rank([H|AH|...]) with H = G G^T, for random systems
    rng = np.random.default_rng(37)
    for _ in range(100):
        d = int(rng.integers(2, 5))
        m = int(rng.integers(1, 4))
        A = rng.standard_normal((d, d))
        G = rng.standard_normal((d, m))
        if rng.random() < 0.3:
            G[:, -1] = 0.0  # exercise deficient loadings too
        H = G @ G.T
        r_g, _ = numerical_rank(krylov_columns(A, [G[:, j] for j in range(m)], d))
        r_h, _ = numerical_rank(krylov_columns(A, [H[:, j] for j in range(d)], d))
        assert r_g == r_h
