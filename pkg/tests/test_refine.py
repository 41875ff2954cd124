"""Nonlinear transfer-distance refinement."""

import numpy as np
import pytest

from evline import synth
from evline.errors import DegenerateSystemError
from evline.refine import (RefineParams, RefineResult, geometric_distance,
                           prepare_refinement, refine_velocity,
                           residual_jacobian, tangent_basis,
                           transfer_residuals)
from evline.solver import solve_nullspace_robust, stack_rows

from helpers import gt_observations


MOTION = synth.MotionSpec(omega=np.array([0.0, 0.0, 2.0]),
                          v=np.array([1.0, 2.0, 0.0]), duration=0.5)


def direction_error(v_gt, v_est):
    u = np.asarray(v_gt, float) / np.linalg.norm(v_gt)
    w = np.asarray(v_est, float) / np.linalg.norm(v_est)
    return float(np.arccos(np.clip(abs(u @ w), 0.0, 1.0)))


def noisy_observations(seed, event_sigma=2.0):
    rng = np.random.default_rng(seed)
    scene = synth.random_scene(5, rng=rng)
    events, labels = synth.generate_events(
        scene, MOTION, n_events=5000, rng=rng,
        noise=synth.NoiseSpec(event_sigma=event_sigma))
    return gt_observations(scene, MOTION, events, labels)


class TestGeometricDistance:
    def test_hand_value(self):
        # f = (1, 2, 2) -> x̄ = (0.5, 1, 1); |1.5 + 4 - 10| / 5 = 0.9
        assert np.isclose(geometric_distance([3.0, 4.0, -10.0],
                                             [1.0, 2.0, 2.0]), 0.9)

    def test_scale_invariant_in_line(self):
        d1 = geometric_distance([3.0, 4.0, -10.0], [1.0, 2.0, 2.0])
        d2 = geometric_distance([-6.0, -8.0, 20.0], [1.0, 2.0, 2.0])
        assert np.isclose(d1, d2)

    def test_point_on_line_is_zero(self):
        # x̄ = (2, 1): 2*1 - 2*1 + 0 = 0 on line (1, -2, 0)
        assert geometric_distance([1.0, -2.0, 0.0], [2.0, 1.0, 1.0]) == 0.0

    def test_rejects_backward_bearing(self):
        with pytest.raises(ValueError):
            geometric_distance([1.0, 0.0, 0.0], [0.0, 0.0, -1.0])

    def test_rejects_line_at_infinity(self):
        with pytest.raises(ValueError):
            geometric_distance([0.0, 0.0, 1.0], [0.0, 0.0, 1.0])


class TestTangentBasis:
    def test_orthonormal_and_orthogonal(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            T = tangent_basis(v)
            assert T.shape == (3, 2)
            assert np.allclose(T.T @ T, np.eye(2), atol=1e-12)
            assert np.allclose(T.T @ v, 0.0, atol=1e-12)

    def test_axis_aligned(self):
        T = tangent_basis(np.array([0.0, 0.0, 1.0]))
        assert np.allclose(T.T @ np.array([0.0, 0.0, 1.0]), 0.0)


class TestJacobian:
    def test_matches_central_differences(self):
        obs = noisy_observations(seed=0)
        matrices, points = prepare_refinement(obs, MOTION.omega)
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(10):
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            J = residual_jacobian(matrices, points, v)
            _, valid = transfer_residuals(matrices, points, v)
            fd = np.empty_like(J)
            for j in range(3):
                dv = np.zeros(3)
                dv[j] = h
                rp, vp = transfer_residuals(matrices, points, v + dv)
                rm, vm = transfer_residuals(matrices, points, v - dv)
                valid &= vp & vm
                fd[:, j] = (rp - rm) / (2.0 * h)
            num = np.linalg.norm(J[valid] - fd[valid])
            den = np.linalg.norm(fd[valid])
            assert num / den < 1e-5

    def test_residuals_vanish_at_truth_noise_free(self):
        rng = np.random.default_rng(2)
        scene = synth.random_scene(5, rng=rng)
        events, labels = synth.generate_events(scene, MOTION,
                                               n_events=3000, rng=rng)
        obs = gt_observations(scene, MOTION, events, labels)
        matrices, points = prepare_refinement(obs, MOTION.omega)
        r, valid = transfer_residuals(matrices, points,
                                      MOTION.v / np.linalg.norm(MOTION.v))
        assert np.max(np.abs(r[valid])) < 1e-9


class TestRefineVelocity:
    def test_final_cost_never_exceeds_initial(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            obs = noisy_observations(seed=seed)
            v0 = MOTION.v / np.linalg.norm(MOTION.v)
            T = tangent_basis(v0)
            v_init = v0 + T @ rng.normal(0.0, 0.1, size=2)
            v_init /= np.linalg.norm(v_init)
            result = refine_velocity(obs, MOTION.omega, v_init)
            assert isinstance(result, RefineResult)
            assert result.final_cost <= result.initial_cost
            assert np.isclose(np.linalg.norm(result.v_refined), 1.0)

    def test_improves_linear_estimate_on_noisy_data(self):
        obs = noisy_observations(seed=0)
        system = stack_rows(obs, MOTION.omega)
        est = solve_nullspace_robust(system, rng=0)
        result = refine_velocity(obs, MOTION.omega, est.v_dir)
        err_lin = direction_error(MOTION.v, est.v_dir)
        err_ref = direction_error(MOTION.v, result.v_refined)
        assert result.final_cost < result.initial_cost
        assert err_ref < err_lin

    def test_median_improvement_over_seeds(self):
        # single trials can regress slightly; the advantage is in the
        # median over repeated draws
        errs_lin, errs_ref = [], []
        for seed in range(10):
            obs = noisy_observations(seed=seed)
            est = solve_nullspace_robust(stack_rows(obs, MOTION.omega),
                                         rng=0)
            result = refine_velocity(obs, MOTION.omega, est.v_dir)
            assert result.final_cost <= result.initial_cost
            errs_lin.append(direction_error(MOTION.v, est.v_dir))
            errs_ref.append(direction_error(MOTION.v, result.v_refined))
        assert np.median(errs_ref) < np.median(errs_lin)

    def test_exact_initialization_is_fixed_point(self):
        rng = np.random.default_rng(4)
        scene = synth.random_scene(5, rng=rng)
        events, labels = synth.generate_events(scene, MOTION,
                                               n_events=3000, rng=rng)
        obs = gt_observations(scene, MOTION, events, labels)
        v0 = MOTION.v / np.linalg.norm(MOTION.v)
        result = refine_velocity(obs, MOTION.omega, v0)
        assert direction_error(v0, result.v_refined) < 1e-7
        assert result.final_cost <= 1e-12

    def test_params_validation(self):
        with pytest.raises(ValueError):
            RefineParams(huber_k_norm=0.0)
        with pytest.raises(ValueError):
            RefineParams(max_iters=0)

    def test_no_admissible_events_raises(self):
        obs = noisy_observations(seed=8)
        for o in obs:
            o.times = o.times + 100.0   # everything far outside [t_s, t_e]
        with pytest.raises(DegenerateSystemError):
            refine_velocity(obs, MOTION.omega,
                            MOTION.v / np.linalg.norm(MOTION.v))
