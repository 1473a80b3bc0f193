"""Full-matrix and diagonal spectral-factorized curvature updates."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specfact import baselines, linalg
from specfact.curvature import gop_residual
from specfact.errors import InvalidArgumentError, PreconditionError
from specfact.harness.metrics import generate_random_spd, make_rng
from specfact.spectral import (CurvatureResidual, SpectralFactor, UpdateConfig,
                               apply_inverse_root, diagonal_step, factor_from_json,
                               factor_to_json, identity_factor, log_det,
                               orthogonality_error, orthonormalize, reconstruct,
                               rgd_step_exact, rgd_step_gop_truncated,
                               rotation_generator, sample_gaussian)


def random_factor(dim, seed, cond=10.0):
    B, d = linalg.sym_eigendecompose(generate_random_spd(dim, cond, seed))
    return SpectralFactor(B, d)


class TestConstructionAndBasics:
    def test_identity_factor_dim1(self):
        f = identity_factor(1)
        assert np.array_equal(f.basis, [[1.0]])
        assert np.array_equal(f.eigvals, [1.0])

    def test_identity_factor_reconstructs_identity(self):
        np.testing.assert_array_equal(reconstruct(identity_factor(3)), np.eye(3))

    def test_identity_factor_log_det_zero(self):
        assert log_det(identity_factor(5)) == 0.0

    def test_identity_factor_rejects_nonpositive_dim(self):
        with pytest.raises(InvalidArgumentError):
            identity_factor(0)

    def test_factor_rejects_nonpositive_eigenvalue(self):
        with pytest.raises(InvalidArgumentError):
            SpectralFactor(np.eye(2), np.array([1.0, 0.0]))

    def test_factor_rejects_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            SpectralFactor(np.eye(3), np.ones(2))

    def test_factor_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            SpectralFactor(np.eye(2), np.array([1.0, np.inf]))

    def test_reconstruct_rotation_example(self):
        B = np.array([[0.0, -1.0], [1.0, 0.0]])  # rotation by 90 degrees
        f = SpectralFactor(B, np.array([2.0, 3.0]))
        np.testing.assert_allclose(reconstruct(f), [[3.0, 0.0], [0.0, 2.0]], atol=1e-15)

    def test_reconstruct_eigen_round_trip(self):
        f = random_factor(8, 41)
        _, d = linalg.sym_eigendecompose(reconstruct(f))
        np.testing.assert_allclose(np.sort(f.eigvals), d, rtol=1e-10)

    def test_log_det_hand_example(self):
        f = SpectralFactor(np.eye(2), np.array([np.e, np.e ** 2]))
        assert log_det(f) == pytest.approx(3.0)

    def test_log_det_matches_dense(self):
        f = random_factor(7, 43)
        assert log_det(f) == pytest.approx(np.linalg.slogdet(reconstruct(f))[1], abs=1e-10)


class TestApplyInverseRoot:
    def test_identity_factor_is_noop(self):
        v = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(apply_inverse_root(identity_factor(3), v, 3.7), v)

    def test_scalar_diagonal_case(self):
        f = SpectralFactor(np.eye(2), np.array([4.0, 4.0]))
        np.testing.assert_allclose(apply_inverse_root(f, np.array([1.0, 1.0]), 2.0),
                                   [0.5, 0.5])

    def test_p1_matches_linear_solve(self):
        f = random_factor(9, 47)
        v = make_rng(47).standard_normal(9)
        expected = np.linalg.solve(reconstruct(f), v)
        np.testing.assert_allclose(apply_inverse_root(f, v, 1.0), expected,
                                   rtol=1e-10, atol=1e-12)

    def test_rejects_nonpositive_root(self):
        with pytest.raises(InvalidArgumentError):
            apply_inverse_root(identity_factor(2), np.ones(2), 0.0)


class TestRotationGenerator:
    def test_repeated_eigenvalues_give_zero(self):
        f = SpectralFactor(np.eye(3), np.full(3, 2.0))
        R = make_rng(53).standard_normal((3, 3))
        U = rotation_generator(f, CurvatureResidual(R + R.T), 1e-8)
        assert np.array_equal(U, np.zeros((3, 3)))

    def test_diagonal_residual_gives_zero_off_diagonal(self):
        f = SpectralFactor(np.eye(3), np.array([1.0, 2.0, 3.0]))
        U = rotation_generator(f, CurvatureResidual(np.diag([1.0, 2.0, 3.0])), 1e-8)
        assert np.count_nonzero(U - np.diag(np.diagonal(U))) == 0

    def test_hand_example(self):
        f = SpectralFactor(np.eye(2), np.array([1.0, 3.0]))
        U = rotation_generator(f, CurvatureResidual(np.array([[0.0, 4.0], [4.0, 0.0]])), 1e-8)
        assert U[1, 0] == pytest.approx(-2.0)
        assert U[0, 1] == pytest.approx(2.0)

    def test_relative_gap_threshold_zeroes_near_ties(self):
        f = SpectralFactor(np.eye(2), np.array([1.0, 1.0 + 1e-12]))
        R = CurvatureResidual(np.array([[0.0, 1.0], [1.0, 0.0]]))
        U = rotation_generator(f, R, 1e-8)
        assert np.array_equal(U, np.zeros((2, 2)))


class TestRgdStepExact:
    def test_zero_residual_is_noop(self):
        f = random_factor(5, 59)
        out = rgd_step_exact(f, CurvatureResidual(np.zeros((5, 5))), UpdateConfig())
        np.testing.assert_array_equal(out.basis, f.basis)
        np.testing.assert_array_equal(out.eigvals, f.eigvals)

    def test_pure_forgetting_shrinks_eigenvalues(self):
        f = random_factor(4, 61)
        cfg = UpdateConfig(beta2=0.05, gamma=1.0)
        out = rgd_step_exact(f, gop_residual(f, np.zeros(4), 1.0), cfg)
        np.testing.assert_allclose(out.eigvals, f.eigvals * np.exp(-0.05), rtol=1e-14)
        np.testing.assert_array_equal(out.basis, f.basis)

    @pytest.mark.parametrize("beta2", [1e-2, 1e-3])
    def test_one_step_matches_dense_ema_to_second_order(self, beta2):
        # halving the step size shrinks the discrepancy ~4x
        f = random_factor(10, 67)
        g = make_rng(67).standard_normal(10)

        def err(b2):
            cfg = UpdateConfig(beta2=b2, gamma=1.0)
            ref = baselines.ema_full_step(reconstruct(f), g, b2, 1.0)
            est = reconstruct(rgd_step_exact(f, gop_residual(f, g, 1.0), cfg))
            return np.linalg.norm(est - ref) / np.linalg.norm(ref)

        ratio = err(beta2) / err(beta2 / 2.0)
        assert 3.5 <= ratio <= 4.5

    def test_diagonal_residual_leaves_basis_unchanged(self):
        f = random_factor(6, 71)
        Cr = CurvatureResidual(np.diag(make_rng(71).standard_normal(6)))
        out = rgd_step_exact(f, Cr, UpdateConfig(beta2=0.1))
        np.testing.assert_array_equal(out.basis, f.basis)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_positivity_under_indefinite_residuals(self, seed):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        f = identity_factor(4)
        cfg = UpdateConfig(beta2=0.1)
        for _ in range(10):
            A = rng.standard_normal((4, 4))
            f = rgd_step_exact(f, CurvatureResidual(A + A.T), cfg)
            assert np.min(f.eigvals) > 0

    def test_rejects_size_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            rgd_step_exact(identity_factor(3), CurvatureResidual(np.zeros((2, 2))),
                           UpdateConfig())


class TestRgdStepGopTruncated:
    def test_zero_gradient_no_forgetting_is_noop(self):
        f = random_factor(4, 73)
        cfg = UpdateConfig(beta2=0.1, gamma=0.0, exp_mode="first_order")
        out = rgd_step_gop_truncated(f, np.zeros(4), cfg)
        np.testing.assert_allclose(out.eigvals, f.eigvals, rtol=1e-15)
        np.testing.assert_array_equal(out.basis, f.basis)

    def test_hand_example(self):
        f = identity_factor(2)
        cfg = UpdateConfig(beta2=0.1, gamma=1.0, exp_mode="first_order")
        out = rgd_step_gop_truncated(f, np.array([1.0, 0.0]), cfg)
        np.testing.assert_allclose(out.eigvals, [1.0, 0.9], rtol=1e-15)

    def test_first_order_match_to_dense_ema(self):
        f = random_factor(8, 79)
        g = make_rng(79).standard_normal(8)

        def err(b2):
            cfg = UpdateConfig(beta2=b2, gamma=1.0, exp_mode="first_order")
            ref = baselines.ema_full_step(reconstruct(f), g, b2, 1.0)
            est = reconstruct(rgd_step_gop_truncated(f, g, cfg))
            return np.linalg.norm(est - ref)

        ratio = err(1e-2) / err(5e-3)
        assert 3.5 <= ratio <= 4.5

    def test_rejects_positivity_losing_config(self):
        cfg = UpdateConfig(beta2=1.0, gamma=1.0, exp_mode="first_order")
        with pytest.raises(PreconditionError):
            rgd_step_gop_truncated(identity_factor(2), np.ones(2), cfg)


class TestDiagonalStep:
    def test_noop_without_signal(self):
        cfg = UpdateConfig(beta2=0.1, gamma=0.0)
        d = np.array([1.0, 2.0])
        np.testing.assert_allclose(diagonal_step(d, np.zeros(2), cfg), d)

    def test_first_order_second_moment_accumulation(self):
        cfg = UpdateConfig(beta2=0.1, gamma=1.0, exp_mode="first_order")
        d = np.array([1.0, 1.0])
        g = np.array([2.0, 0.0])
        np.testing.assert_allclose(diagonal_step(d, g, cfg), [1.3, 0.9], rtol=1e-15)

    def test_accumulation_without_forgetting_is_monotone(self):
        cfg = UpdateConfig(beta2=0.5, gamma=0.0, exp_mode="first_order")
        d = np.ones(3)
        for seed in range(5):
            g = make_rng(83, seed).standard_normal(3)
            d_next = diagonal_step(d, g, cfg)
            assert np.all(d_next >= d)
            d = d_next

    def test_rejects_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            diagonal_step(np.ones(2), np.ones(3), UpdateConfig())


class TestSampleGaussian:
    def test_huge_eigenvalues_collapse_to_mean(self):
        f = SpectralFactor(np.eye(3), np.full(3, 1e12))
        mu = np.array([1.0, -2.0, 3.0])
        w = sample_gaussian(f, mu, 100, rng_seed=5)
        assert np.max(np.abs(w - mu)) <= 1e-5

    def test_sample_covariance_near_identity(self):
        w = sample_gaussian(identity_factor(4), np.zeros(4), 100000, rng_seed=9)
        cov = w.T @ w / w.shape[0]
        assert np.linalg.norm(cov - np.eye(4)) / np.linalg.norm(np.eye(4)) <= 0.05

    def test_sample_covariance_matches_inverse(self):
        f = random_factor(3, 89)
        w = sample_gaussian(f, np.zeros(3), 200000, rng_seed=11)
        cov = w.T @ w / w.shape[0]
        target = np.linalg.inv(reconstruct(f))
        assert np.linalg.norm(cov - target) / np.linalg.norm(target) <= 0.05

    def test_fixed_seed_is_bit_identical(self):
        f = random_factor(5, 97)
        a = sample_gaussian(f, np.zeros(5), 50, rng_seed=123)
        b = sample_gaussian(f, np.zeros(5), 50, rng_seed=123)
        np.testing.assert_array_equal(a, b)

    def test_rejects_mean_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            sample_gaussian(identity_factor(3), np.zeros(2), 10, rng_seed=0)


class TestOrthogonalityMaintenance:
    def test_drift_stays_tiny_over_many_exact_steps(self):
        rng = make_rng(0x0D, 0)
        f = identity_factor(50)
        cfg = UpdateConfig(beta2=0.01, gamma=1.0)
        for _ in range(10000):
            f = rgd_step_exact(f, gop_residual(f, rng.standard_normal(50), 1.0), cfg)
        assert orthogonality_error(f) <= 1e-8
        assert np.min(f.eigvals) > 0

    def test_orthonormalize_repairs_small_drift(self):
        f = random_factor(6, 101)
        perturbed = SpectralFactor(f.basis + 1e-6 * make_rng(101).standard_normal((6, 6)),
                                   f.eigvals)
        repaired = orthonormalize(perturbed)
        assert orthogonality_error(repaired) < 1e-3 * orthogonality_error(perturbed)


class TestSerialization:
    def test_json_round_trip(self):
        f = random_factor(5, 103)
        back = factor_from_json(factor_to_json(f))
        assert np.max(np.abs(back.basis - f.basis)) <= 1e-15
        assert np.max(np.abs(back.eigvals - f.eigvals)) <= 1e-15


class TestUpdateConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        {"beta2": -0.1},
        {"gamma": 0.5},
        {"p": 0.0},
        {"damping": -1.0},
        {"gap_rel_tol": 0.0},
        {"cayley_mode": "other"},
        {"exp_mode": "other"},
        {"clip_norm": 0.0},
    ])
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            UpdateConfig(**kwargs)

    def test_residual_must_be_symmetric(self):
        with pytest.raises(InvalidArgumentError):
            CurvatureResidual(np.array([[0.0, 1.0], [0.0, 0.0]]))
