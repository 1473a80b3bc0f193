"""Cayley maps, triangular/skew restrictions, and decomposition helpers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specfact import linalg
from specfact.errors import DomainError, InvalidArgumentError, PreconditionError


def rng_for(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def random_skew(dim, seed, norm=None):
    N = linalg.skew_part(rng_for(seed).standard_normal((dim, dim)))
    if norm is not None:
        N *= norm / np.linalg.norm(N)
    return N


class TestSkewPart:
    def test_symmetric_input_gives_zero(self):
        M = np.array([[2.0, 1.0], [1.0, 5.0]])
        assert np.array_equal(linalg.skew_part(M), np.zeros((2, 2)))

    def test_hand_example(self):
        M = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert np.array_equal(linalg.skew_part(M), [[0.0, 1.0], [-1.0, 0.0]])

    def test_applying_twice_doubles(self):
        M = rng_for(3).standard_normal((4, 4))
        once = linalg.skew_part(M)
        np.testing.assert_allclose(linalg.skew_part(once), 2.0 * once)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(2, 8))
    def test_output_exactly_antisymmetric(self, seed, dim):
        R = linalg.skew_part(rng_for(seed).standard_normal((dim, dim)))
        assert np.array_equal(R, -R.T)

    def test_rejects_non_square(self):
        with pytest.raises(InvalidArgumentError):
            linalg.skew_part(np.zeros((2, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            linalg.skew_part(np.array([[0.0, np.nan], [0.0, 0.0]]))


class TestStrictLower:
    def test_identity_gives_zero(self):
        assert np.array_equal(linalg.strict_lower(np.eye(3)), np.zeros((3, 3)))

    def test_hand_example(self):
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(linalg.strict_lower(M), [[0.0, 0.0], [3.0, 0.0]])

    def test_idempotent(self):
        M = rng_for(5).standard_normal((6, 6))
        L = linalg.strict_lower(M)
        assert np.array_equal(linalg.strict_lower(L), L)


class TestCayleyExact:
    def test_zero_maps_to_identity(self):
        assert np.array_equal(linalg.cayley_exact(np.zeros((3, 3))), np.eye(3))

    def test_closed_form_2x2(self):
        theta = 0.5
        N = np.array([[0.0, theta], [-theta, 0.0]])
        expected = np.array([[0.75, 1.0], [-1.0, 0.75]]) / 1.25
        np.testing.assert_allclose(linalg.cayley_exact(N), expected, atol=1e-14)

    def test_orthogonal_output_dim5(self):
        Q = linalg.cayley_exact(random_skew(5, 11))
        np.testing.assert_allclose(Q.T @ Q, np.eye(5), atol=1e-12)

    @pytest.mark.parametrize("dim", [2, 5, 20, 50])
    def test_orthogonality_bound(self, dim):
        Q = linalg.cayley_exact(random_skew(dim, dim, norm=2.0))
        err = np.linalg.norm(Q.T @ Q - np.eye(dim))
        assert err <= 10.0 * dim * np.finfo(np.float64).eps

    def test_rejects_non_skew(self):
        with pytest.raises(InvalidArgumentError):
            linalg.cayley_exact(np.array([[0.0, 1.0], [1.0, 0.0]]))


class TestCayleyInverse:
    def test_identity_maps_to_zero(self):
        assert np.allclose(linalg.cayley_inverse(np.eye(4)), 0.0)

    def test_round_trip_dim6(self):
        N = random_skew(6, 7, norm=1.0)
        back = linalg.cayley_inverse(linalg.cayley_exact(N))
        assert np.max(np.abs(back - N)) <= 1e-10

    def test_round_trip_large_norm(self):
        # injective up to moderate generator norms
        N = random_skew(5, 13, norm=10.0)
        back = linalg.cayley_inverse(linalg.cayley_exact(N))
        np.testing.assert_allclose(back, N, atol=1e-8)

    def test_minus_identity_is_domain_error(self):
        with pytest.raises(DomainError):
            linalg.cayley_inverse(-np.eye(2))


class TestCayleyTruncated:
    def test_zero_maps_to_identity(self):
        assert np.array_equal(linalg.cayley_truncated(np.zeros((3, 3))), np.eye(3))

    def test_small_norm_error(self):
        N = random_skew(8, 17, norm=0.1)
        err = np.linalg.norm(linalg.cayley_truncated(N) - linalg.cayley_exact(N))
        assert err <= 1e-7

    def test_error_order_on_halving(self):
        N = random_skew(8, 19, norm=0.2)
        e_big = np.linalg.norm(linalg.cayley_truncated(N) - linalg.cayley_exact(N))
        Nh = 0.5 * N
        e_small = np.linalg.norm(linalg.cayley_truncated(Nh) - linalg.cayley_exact(Nh))
        assert e_big / e_small >= 100.0

    def test_error_slope_at_least_seven(self):
        norms = np.array([0.05, 0.1, 0.2])
        base = random_skew(8, 23, norm=1.0)
        errs = []
        for s in norms:
            N = s * base
            errs.append(np.linalg.norm(linalg.cayley_truncated(N) - linalg.cayley_exact(N)))
        slope = (np.log(errs[-1]) - np.log(errs[0])) / (np.log(norms[-1]) - np.log(norms[0]))
        assert slope >= 7.0

    def test_rejects_divergent_norm(self):
        with pytest.raises(PreconditionError):
            linalg.cayley_truncated(random_skew(4, 29, norm=1.5))


class TestSymEigendecompose:
    def test_identity(self):
        B, d = linalg.sym_eigendecompose(np.eye(4))
        np.testing.assert_allclose(d, np.ones(4))

    def test_diagonal_input(self):
        B, d = linalg.sym_eigendecompose(np.diag([1.0, 4.0, 9.0]))
        np.testing.assert_allclose(d, [1.0, 4.0, 9.0])
        # signed permutation: one +-1 per row/column
        np.testing.assert_allclose(np.abs(B), np.eye(3), atol=1e-14)

    def test_eigenvalues_ascending_and_reconstruction(self):
        A = rng_for(31).standard_normal((20, 20))
        S = A @ A.T + np.eye(20)
        B, d = linalg.sym_eigendecompose(S)
        assert np.all(np.diff(d) >= 0)
        resid = np.linalg.norm((B * d) @ B.T - S) / np.linalg.norm(S)
        assert resid <= 1e-10

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidArgumentError):
            linalg.sym_eigendecompose(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestSpdSqrt:
    def test_identity(self):
        np.testing.assert_allclose(linalg.spd_sqrt(np.eye(3)), np.eye(3))

    def test_diagonal_case(self):
        np.testing.assert_allclose(linalg.spd_sqrt(np.diag([4.0, 9.0])),
                                   np.diag([2.0, 3.0]), atol=1e-14)

    def test_square_recovers_input(self):
        A = rng_for(37).standard_normal((10, 10))
        S = A @ A.T + 0.5 * np.eye(10)
        R = linalg.spd_sqrt(S)
        np.testing.assert_allclose(R, R.T)
        assert np.linalg.norm(R @ R - S) / np.linalg.norm(S) <= 1e-10

    def test_rejects_indefinite(self):
        with pytest.raises(DomainError):
            linalg.spd_sqrt(np.diag([1.0, -1.0]))
