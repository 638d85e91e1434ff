"""
Unit tests for the augmented model and the extended Kalman filter
=================================================================
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.errors import EstimationError
from src.core.simulation import InputSignal, make_truth
from src.estimators import ExtendedKalmanFilter, estimator_registry
from src.estimators.ekf import EkfState, default_process_noise, ekf_predict, ekf_update


def _numeric_jacobian(function, z, h=1e-6):
    base = np.atleast_1d(function(z))
    columns = []
    for i in range(len(z)):
        step = np.zeros_like(z)
        step[i] = h * max(1.0, abs(z[i]))
        columns.append((np.atleast_1d(function(z + step)) - np.atleast_1d(function(z - step))) / (2 * step[i]))
    return np.column_stack(columns).reshape(len(base), len(z))


class TestAugmentedModel:
    """Test the scaled augmented dynamics."""

    def test_dimensions_and_scaling(self, augmented_model):
        """Test T = diag(s, ..., s, 1)."""
        assert augmented_model.dim == augmented_model.order + 1
        assert_allclose(augmented_model.scaling, [1e-8, 1e-8, 1e-8, 1.0])

    def test_scaled_roundtrip(self, augmented_model):
        """Test physical to scaled coordinates and back."""
        x = np.array([1e-8, -2e-8, 5e-9])
        z = augmented_model.to_scaled(x, 0.3)
        assert_allclose(z, [1.0, -2.0, 0.5, 0.3])
        x_back, alpha = augmented_model.from_scaled(z)
        assert_allclose(x_back, x)
        assert alpha == 0.3

    def test_scale_covariance(self, augmented_model):
        """Test T^-1 P T^-1 for a diagonal covariance."""
        scaled = augmented_model.scale_covariance(np.diag([1e-16, 1e-16, 1e-16, 0.01]))
        assert_allclose(np.diag(scaled), [1.0, 1.0, 1.0, 0.01])

    def test_transition_matches_discrete_step(self, augmented_model, small_discrete):
        """Test f against the physical recursion."""
        x = np.array([1e-8, 2e-8, -1e-8])
        z_next = augmented_model.transition(augmented_model.to_scaled(x, 0.1), 0.03)
        x_next, alpha = augmented_model.from_scaled(z_next)
        assert_allclose(x_next, small_discrete.step(x, 0.1, 0.03), rtol=1e-12)
        assert alpha == 0.1

    def test_output_matches_volume_row(self, augmented_model, small_discrete):
        """Test g against c_vol(alpha) x."""
        x = np.array([1e-8, 2e-8, -1e-8])
        y = augmented_model.output(augmented_model.to_scaled(x, -0.2))
        assert y == pytest.approx(float(small_discrete.c_vol(-0.2) @ x), rel=1e-12)

    def test_transition_jacobian(self, augmented_model):
        """Test the analytic Jacobian of f by central differences."""
        z = np.array([3.0, -1.0, 2.0, 0.15])
        numeric = _numeric_jacobian(lambda v: augmented_model.transition(v, 0.03), z)
        assert_allclose(augmented_model.transition_jacobian(z, 0.03), numeric, rtol=1e-5, atol=1e-8)

    def test_output_jacobian(self, augmented_model):
        """Test the analytic Jacobian of g by central differences."""
        z = np.array([3.0, -1.0, 2.0, 0.15])
        numeric = _numeric_jacobian(augmented_model.output, z)
        assert_allclose(augmented_model.output_jacobian(z), numeric[0], rtol=1e-5, atol=1e-10)


class TestEkfSteps:
    """Test the predict and update steps."""

    def test_predict(self, augmented_model):
        """Test z- = f(z, u) and P- = F P F^T + Q."""
        Q = default_process_noise(augmented_model.order)
        state = EkfState(z=np.array([1.0, 0.0, 0.0, 0.1]), P=np.eye(4))
        predicted = ekf_predict(augmented_model, state, 0.03, Q)
        F = augmented_model.transition_jacobian(state.z, 0.03)
        assert_allclose(predicted.z, augmented_model.transition(state.z, 0.03))
        assert_allclose(predicted.P, F @ F.T + Q, rtol=1e-12)

    def test_freeze_without_input(self, augmented_model):
        """Test that alpha variance does not grow while the laser is off."""
        Q = default_process_noise(augmented_model.order)
        state = EkfState(z=np.array([1.0, 0.0, 0.0, 0.1]), P=np.eye(4))
        frozen = ekf_predict(augmented_model, state, 0.0, Q)
        assert frozen.P[-1, -1] == pytest.approx(1.0)
        growing = ekf_predict(augmented_model, state, 0.0, Q, freeze_alpha_without_input=False)
        assert growing.P[-1, -1] == pytest.approx(1.15)

    def test_joseph_update_equals_standard_form(self, augmented_model):
        """Test the Joseph covariance against (I - K H) P for the optimal gain."""
        z = np.array([2.0, 1.0, -1.0, 0.1])
        P = np.diag([1.0, 2.0, 0.5, 0.15])
        updated, innovation = ekf_update(augmented_model, EkfState(z=z, P=P), 40.0, 100.0)
        H = augmented_model.output_jacobian(z)
        K = P @ H / (H @ P @ H + 100.0)
        assert innovation == pytest.approx(40.0 - augmented_model.output(z))
        assert_allclose(updated.z, z + K * innovation)
        assert_allclose(updated.P, (np.eye(4) - np.outer(K, H)) @ P, rtol=1e-10, atol=1e-12)
        assert_allclose(updated.P, updated.P.T)

    def test_non_positive_innovation_covariance(self, augmented_model):
        """Test that S <= 0 raises."""
        state = EkfState(z=np.zeros(4), P=np.zeros((4, 4)))
        with pytest.raises(EstimationError, match="Innovation covariance"):
            ekf_update(augmented_model, state, 1.0, -1.0)


class TestExtendedKalmanFilter:
    """Test the sequential filter."""

    def test_initial_estimate(self, augmented_model):
        """Test that the first update cannot move alpha from x = 0."""
        ekf = ExtendedKalmanFilter("ekf", augmented_model, default_process_noise(3), 100.0)
        record = ekf.step(None, 0.0)
        assert record.alpha == 0.0
        assert_allclose(record.x, 0.0)
        assert record.wall_time >= 0.0
        assert ekf.samples == 1

    def test_invalid_configuration(self, augmented_model):
        """Test validation of Q shape and R sign."""
        with pytest.raises(EstimationError, match="matrices"):
            ExtendedKalmanFilter("ekf", augmented_model, np.eye(2), 100.0)
        with pytest.raises(EstimationError, match="positive"):
            ExtendedKalmanFilter("ekf", augmented_model, default_process_noise(3), 0.0)

    def test_tracks_noise_free_truth(self, small_discrete, augmented_model):
        """Test that the output estimate follows a clean measurement stream."""
        signal = InputSignal.constant(0.03, 0.4)
        truth = make_truth(small_discrete, 0.2, signal, noise_variance=0.0)
        ekf = ExtendedKalmanFilter("ekf", augmented_model, default_process_noise(3), 1.0)
        records = ekf.run(truth.inputs, truth.y_meas)
        assert len(records) == truth.steps
        residual = np.array([r.y_vol for r in records[10:]]) - truth.y_vol[10:]
        assert np.max(np.abs(residual)) < 0.1 * np.max(truth.y_vol)

    def test_run_resets(self, small_discrete, augmented_model):
        """Test that repeated runs give identical estimates."""
        truth = make_truth(small_discrete, 0.2, InputSignal.constant(0.03, 0.1), seed=5)
        ekf = ExtendedKalmanFilter("ekf", augmented_model, default_process_noise(3), 100.0)
        first = [r.alpha for r in ekf.run(truth.inputs, truth.y_meas)]
        second = [r.alpha for r in ekf.run(truth.inputs, truth.y_meas)]
        assert first == second


class TestEstimatorRegistry:
    """Test creation of estimators by kind."""

    def test_registered_kinds(self):
        """Test that importing the package registers both kinds."""
        assert estimator_registry.list_kinds() == ["ekf", "mhe"]

    def test_create_from_settings(self, augmented_model):
        """Test settings-driven EKF construction."""
        ekf = estimator_registry.create("ekf", "ekf_R1000", augmented_model, {"R": 1000.0, "q_alpha": 0.1})
        assert isinstance(ekf, ExtendedKalmanFilter)
        assert ekf.name == "ekf_R1000"
        assert ekf.R == 1000.0
        assert ekf.Q[-1, -1] == pytest.approx(0.1)

    def test_duplicate_registration(self):
        """Test that a kind cannot be registered twice."""
        assert estimator_registry.register("ekf", lambda name, model, settings: None) is False

    def test_unknown_kind(self, augmented_model):
        """Test lookup of unregistered kinds."""
        with pytest.raises(KeyError, match="Unknown estimator kind"):
            estimator_registry.create("ukf", "ukf", augmented_model)
