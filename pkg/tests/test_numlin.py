import numpy as np
import pytest

from cdctl import (
    ResponsePair,
    condition_number,
    gsvd,
    pseudo_inverse,
    regularized_inverse,
    subspace_angles,
)
from cdctl.errors import (
    DimensionMismatch,
    RankDeficient,
    SingularSystem,
    ZeroColumn,
    ZeroMatrix,
)
from cdctl.numlin import (
    matrix_from_obj,
    matrix_to_obj,
    read_matrix_csv,
    read_matrix_json,
    write_matrix_csv,
    write_matrix_json,
)


def check_factorization(pair, fact, res_tol=1e-10, ortho_tol=1e-12, norm_tol=1e-12):
    R_s_hat, R_f_hat = fact.reconstruct()
    assert np.linalg.norm(pair.R_s - R_s_hat) <= res_tol * np.linalg.norm(pair.R_s)
    assert np.linalg.norm(pair.R_f - R_f_hat) <= res_tol * np.linalg.norm(pair.R_f)
    assert np.abs(fact.sigma_s**2 + fact.sigma_f**2 - 1.0).max() <= norm_tol
    assert np.abs(fact.U_s.T @ fact.U_s - np.eye(fact.n_s)).max() <= ortho_tol
    assert np.abs(fact.U_f.T @ fact.U_f - np.eye(fact.n_f)).max() <= ortho_tol
    sv = np.linalg.svd(fact.X, compute_uv=False)
    assert sv[-1] > 1e-12 * sv[0]
    assert np.all(np.diff(fact.sigma_f) <= 1e-14)  # non-increasing ordering


class TestGsvd:
    def test_identity_pair(self):
        # symmetric pair forces an even split, sigma^2 + sigma^2 = 1
        pair = ResponsePair(np.eye(2), np.eye(2))
        fact = gsvd(pair)
        check_factorization(pair, fact)
        assert np.allclose(fact.sigma_s, 1 / np.sqrt(2), atol=1e-14)
        assert np.allclose(fact.sigma_f, 1 / np.sqrt(2), atol=1e-14)

    def test_hand_worked_2x1(self):
        # R_s = I2, R_f = [1, 0]^T: solved by hand from
        # R_s R_s^T = X diag(s_s^2, 1) X^T and R_f R_f^T = X diag(s_f^2, 0) X^T
        pair = ResponsePair(np.eye(2), np.array([[1.0], [0.0]]))
        fact = gsvd(pair)
        check_factorization(pair, fact)
        assert fact.sigma_s == pytest.approx([1 / np.sqrt(2)], abs=1e-14)
        assert fact.sigma_f == pytest.approx([1 / np.sqrt(2)], abs=1e-14)
        assert np.allclose(np.abs(fact.X), [[np.sqrt(2), 0.0], [0.0, 1.0]], atol=1e-14)
        assert np.allclose(np.abs(fact.U_f), [[1.0]])

    @pytest.mark.parametrize("dims", [(2, 2, 1), (5, 9, 3), (24, 24, 24), (96, 120, 96)])
    def test_random_pairs(self, dims):
        n_y, n_s, n_f = dims
        rng = np.random.default_rng(17)
        pair = ResponsePair(rng.normal(size=(n_y, n_s)), rng.normal(size=(n_y, n_f)))
        check_factorization(pair, gsvd(pair))

    def test_reference_96(self, pair_96, fact_96):
        check_factorization(pair_96, fact_96)

    def test_tiso_subspace_spans_fast_range(self, pair_96, fact_96):
        # first n_f columns of X span range(R_f)
        n_f = fact_96.n_f
        basis, _ = np.linalg.qr(fact_96.X[:, :n_f])
        proj = basis @ basis.T
        assert np.linalg.norm(proj @ pair_96.R_f - pair_96.R_f) <= 1e-10 * np.linalg.norm(pair_96.R_f)

    def test_deterministic(self, pair_96):
        a, b = gsvd(pair_96), gsvd(pair_96)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.U_s, b.U_s)

    def test_rank_deficient_slow_rejected(self):
        R_s = np.ones((3, 4))  # rank 1 < 3
        R_f = np.eye(3)[:, :2]
        with pytest.raises(RankDeficient):
            gsvd(ResponsePair(R_s, R_f))

    def test_rank_deficient_fast_rejected(self, pair_small):
        R_f = pair_small.R_f.copy()
        R_f[:, -1] = R_f[:, 0]  # duplicate column, rank n_f - 1
        with pytest.raises(RankDeficient):
            gsvd(ResponsePair(pair_small.R_s, R_f))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            ResponsePair(np.eye(3), np.eye(4))
        with pytest.raises(DimensionMismatch):
            ResponsePair(np.eye(3)[:, :2], np.eye(3))  # n_s < n_y
        with pytest.raises(DimensionMismatch):
            ResponsePair(np.full((2, 2), np.nan), np.eye(2))


class TestLemma1:
    def test_singular_values_of_x_match_stacked(self, pair_96, fact_96):
        sv_x = np.linalg.svd(fact_96.X, compute_uv=False)
        sv_r = np.linalg.svd(pair_96.stacked(), compute_uv=False)
        assert np.abs(sv_x - sv_r).max() <= 1e-9 * sv_r[0]

    def test_left_singular_vectors_match(self, pair_96, fact_96):
        # shared left singular basis up to sign (distinct singular values)
        U_x, _, _ = np.linalg.svd(fact_96.X)
        U_r, _, _ = np.linalg.svd(pair_96.stacked())
        overlap = np.abs(np.sum(U_x * U_r, axis=0))
        assert np.all(overlap > 1 - 1e-8)


class TestPseudoInverse:
    def test_invertible(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(5, 5)) + 5 * np.eye(5)
        assert np.allclose(pseudo_inverse(A), np.linalg.inv(A), atol=1e-10)

    def test_diagonal_with_zero(self):
        A = np.diag([2.0, 0.0])
        assert np.allclose(pseudo_inverse(A), np.diag([0.5, 0.0]))
        assert np.allclose(A @ pseudo_inverse(A), np.diag([1.0, 0.0]))

    def test_zero_matrix_maps_to_zero(self):
        assert np.array_equal(pseudo_inverse(np.zeros((3, 2))), np.zeros((2, 3)))

    @pytest.mark.parametrize("shape,seed", [((6, 4), 1), ((4, 6), 2), ((5, 5), 3)])
    def test_moore_penrose_identities(self, shape, seed):
        A = np.random.default_rng(seed).normal(size=shape)
        P = pseudo_inverse(A)
        scale = np.linalg.norm(A)
        assert np.linalg.norm(A @ P @ A - A) <= 1e-10 * scale
        assert np.linalg.norm(P @ A @ P - P) <= 1e-10 * np.linalg.norm(P)
        assert np.linalg.norm(A @ P - (A @ P).T) <= 1e-10
        assert np.linalg.norm(P @ A - (P @ A).T) <= 1e-10

    def test_projector_eigenvalues_on_truncated_basis(self, fact_96):
        Xt = fact_96.x_tiso()
        eig = np.linalg.eigvalsh(Xt @ pseudo_inverse(Xt))
        n_f, n_y = fact_96.n_f, fact_96.n_y
        assert np.sum(np.abs(eig - 1.0) < 1e-10) == n_f
        assert np.sum(np.abs(eig) < 1e-10) == n_y - n_f


class TestRegularizedInverse:
    def test_mu_zero_is_plain_inverse(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(6, 6)) + 3 * np.eye(6)
        Xi = regularized_inverse(X, 0.0)
        assert np.allclose(Xi, np.linalg.inv(X), atol=1e-10 * np.linalg.cond(X))
        assert np.allclose(X @ Xi, np.eye(6), atol=1e-10)

    def test_diagonal_closed_form(self):
        # per-axis sigma/(sigma^2 + mu), cross-checked by direct inversion
        X = np.diag([10.0, 0.1])
        Xi = regularized_inverse(X, 1.0)
        assert np.allclose(Xi, np.diag([10 / 101, 0.1 / 1.01]), atol=1e-15)
        direct = np.linalg.inv(X.T @ X + np.eye(2)) @ X.T
        assert np.allclose(Xi, direct, atol=1e-15)

    def test_norm_monotone_in_mu(self):
        X = np.random.default_rng(5).normal(size=(8, 8))
        norms = [np.linalg.norm(regularized_inverse(X, mu), 2) for mu in (0.0, 1.0, 10.0)]
        assert norms[2] <= norms[1] <= norms[0]

    def test_weighted_variant(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(5, 5))
        B = rng.normal(size=(5, 5))
        W = B @ B.T + 5 * np.eye(5)
        Xi = regularized_inverse(X, 0.5, W)
        direct = np.linalg.solve(X.T @ W @ X + 0.5 * np.eye(5), (W @ X).T)
        assert np.allclose(Xi, direct, atol=1e-12)

    def test_singular_system_raises(self):
        X = np.zeros((3, 3))
        with pytest.raises(SingularSystem):
            regularized_inverse(X, 0.0)

    def test_rejects_bad_weights(self):
        X = np.eye(3)
        with pytest.raises(ValueError):
            regularized_inverse(X, 1.0, -np.eye(3))
        with pytest.raises(ValueError):
            regularized_inverse(X, -1.0)


class TestSubspaceAngles:
    def test_identity_case(self):
        U = np.eye(3)
        ang = subspace_angles(U, U)
        assert np.allclose(np.diag(ang), 0.0, atol=1e-9)
        off = ang[~np.eye(3, dtype=bool)]
        assert np.allclose(off, 90.0, atol=1e-9)

    def test_diagonal_combination(self):
        U = np.eye(2)
        X = np.array([[1.0, 1.0], [1.0, -1.0]])  # columns U1 +- U2
        ang = subspace_angles(X, U)
        assert np.allclose(ang, 45.0, atol=1e-9)

    def test_matches_direct_inner_products(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(6, 6))
        U, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        ang = subspace_angles(X, U)
        assert np.all((ang >= 0.0) & (ang <= 90.0))
        for i in range(6):
            for j in range(6):
                expect = np.degrees(np.arccos(
                    min(1.0, abs(X[:, i] @ U[:, j]) / np.linalg.norm(X[:, i]))))
                assert ang[i, j] == pytest.approx(expect, abs=1e-9)

    def test_zero_column(self):
        X = np.eye(3)
        X[:, 1] = 0.0
        with pytest.raises(ZeroColumn):
            subspace_angles(X, np.eye(3))


class TestConditionNumber:
    def test_identity(self):
        assert condition_number(np.eye(4)) == pytest.approx(1.0)

    def test_diagonal_ratio(self):
        assert condition_number(np.diag([10.0, 0.01])) == pytest.approx(1000.0)

    def test_rectangular_uses_pinv_norm(self):
        A = np.zeros((3, 2))
        A[0, 0], A[1, 1] = 4.0, 2.0
        assert condition_number(A) == pytest.approx(2.0)

    def test_zero_matrix(self):
        with pytest.raises(ZeroMatrix):
            condition_number(np.zeros((2, 2)))

    def test_kappa_x_equals_kappa_stacked(self, pair_96, fact_96):
        k_x = condition_number(fact_96.X)
        k_r = condition_number(pair_96.stacked())
        assert k_x == pytest.approx(k_r, rel=1e-9)


class TestMatrixIO:
    def test_csv_round_trip(self, tmp_path):
        A = np.random.default_rng(8).normal(size=(4, 7)) * 1e-7
        p = tmp_path / "m.csv"
        write_matrix_csv(p, A)
        assert read_matrix_csv(p).tolist() == A.tolist()
        header = p.read_text().splitlines()[0]
        assert header == "# 4 7"

    def test_json_round_trip(self, tmp_path):
        A = np.random.default_rng(9).normal(size=(3, 3))
        p = tmp_path / "m.json"
        write_matrix_json(p, A)
        assert np.array_equal(read_matrix_json(p), A)

    def test_obj_round_trip(self):
        A = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(matrix_from_obj(matrix_to_obj(A)), A)
