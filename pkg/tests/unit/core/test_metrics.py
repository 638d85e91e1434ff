"""
Unit tests for estimation metrics
=================================
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.errors import MetricsError
from src.core.metrics import (
    compute_metrics,
    convergence_time,
    overshoot,
    relative_l2_error,
    relative_noise,
    relative_state_error,
    summarize,
)


class TestRelativeStateError:
    """Test e_x in scaled coordinates."""

    def test_perfect_estimate(self):
        """Test zero error for identical state and parameter."""
        x = np.array([[1e-8, 2e-8], [3e-8, 4e-8]])
        errors = relative_state_error(x, 0.2, x.copy(), np.array([0.2, 0.2]))
        assert_allclose(errors, 0.0)

    def test_scaling_balances_state_and_parameter(self):
        """Test that scaled states and alpha enter the norm on equal footing."""
        x_true = np.array([[3e-8]])
        x_hat = np.array([[0.0]])
        errors = relative_state_error(x_true, 4.0, x_hat, np.array([4.0]), state_scale=1e-8)
        assert errors[0] == pytest.approx(3.0 / 5.0)

    def test_zero_truth(self):
        """Test 0 for a perfect estimate of a zero vector and nan otherwise."""
        x_true = np.zeros((2, 1))
        x_hat = np.array([[0.0], [1e-8]])
        errors = relative_state_error(x_true, 0.0, x_hat, np.array([0.0, 0.0]))
        assert errors[0] == 0.0
        assert math.isnan(errors[1])

    def test_shape_mismatch(self):
        """Test rejection of inconsistent series."""
        with pytest.raises(MetricsError, match="shapes differ"):
            relative_state_error(np.zeros((3, 2)), 0.1, np.zeros((2, 2)), np.zeros(2))


class TestRelativeNoise:
    """Test d_n."""

    def test_values(self):
        """Test |y - y_meas| / |y| per sample."""
        assert_allclose(relative_noise(np.array([2.0, -4.0]), np.array([3.0, -3.0])), [0.5, 0.25])

    def test_zero_output(self):
        """Test 0 for an exact zero measurement and nan for noise on zero."""
        values = relative_noise(np.array([0.0, 0.0]), np.array([0.0, 1.0]))
        assert values[0] == 0.0
        assert math.isnan(values[1])


class TestConvergence:
    """Test convergence time and overshoot."""

    def test_convergence_time(self):
        """Test the first time after which the band is never left."""
        times = np.arange(6) * 0.1
        alpha_hat = np.array([0.0, 0.19, 0.3, 0.21, 0.2, 0.2])
        assert convergence_time(times, alpha_hat, 0.2, tolerance=0.05) == pytest.approx(0.3)

    def test_converged_from_start(self):
        """Test an estimate that starts inside the band."""
        times = np.arange(3) * 0.1
        assert convergence_time(times, np.full(3, 0.2), 0.2) == 0.0

    def test_not_converged(self):
        """Test inf when the last sample is outside the band."""
        times = np.arange(3) * 0.1
        assert convergence_time(times, np.array([0.2, 0.2, 0.0]), 0.2) == math.inf

    def test_length_mismatch(self):
        """Test rejection of unequal series."""
        with pytest.raises(MetricsError):
            convergence_time(np.arange(3), np.zeros(2), 0.1)

    def test_overshoot_positive_direction(self):
        """Test overshoot when approaching from below."""
        assert overshoot(np.array([0.0, 0.1, 0.25, 0.2]), 0.2) == pytest.approx(0.05)

    def test_overshoot_negative_direction(self):
        """Test overshoot when approaching from above."""
        assert overshoot(np.array([0.0, -0.1, -0.35, -0.3]), -0.3) == pytest.approx(0.05)

    def test_no_overshoot(self):
        """Test a monotone approach."""
        assert overshoot(np.array([0.0, 0.1, 0.2]), 0.2) == 0.0


class TestSummaries:
    """Test metric series and summaries."""

    def test_relative_l2_error(self):
        """Test the discrete relative L2 error."""
        assert relative_l2_error(np.array([3.0, 4.0]), np.array([3.0, 3.0])) == pytest.approx(0.2)
        with pytest.raises(MetricsError):
            relative_l2_error(np.ones(2), np.ones(3))

    def test_compute_and_summarize(self):
        """Test the combined series and the settled median."""
        times = np.arange(5) * 0.25
        x_true = np.full((5, 1), 1e-8)
        x_hat = np.array([[0.0], [0.5e-8], [1e-8], [1e-8], [1e-8]])
        alpha_hat = np.array([0.0, 0.1, 0.2, 0.2, 0.2])
        y_clean = np.array([0.0, 1.0, 2.0, 2.0, 2.0])
        y_meas = y_clean + 0.1
        series = compute_metrics(times, x_true, 0.2, y_clean, y_meas, x_hat, alpha_hat)
        assert series.state_error[-1] == 0.0
        assert math.isnan(series.relative_noise[0])
        summary = summarize(series, alpha_hat, 0.2, tolerance=0.05, settle_time=0.5)
        assert summary.convergence_time == pytest.approx(0.5)
        assert summary.steady_state_error == 0.0
        assert summary.final_alpha_error == pytest.approx(0.0)
        assert summary.overshoot == 0.0

    def test_missing_truth_states(self):
        """Test nan state errors without a reduced truth state."""
        times = np.arange(3) * 0.1
        series = compute_metrics(
            times, None, 0.2, np.ones(3), np.ones(3), np.zeros((3, 2)), np.full(3, 0.2)
        )
        assert np.all(np.isnan(series.state_error))
        assert math.isnan(summarize(series, np.full(3, 0.2), 0.2).steady_state_error)

    def test_length_mismatch(self):
        """Test rejection of truncated estimate series."""
        with pytest.raises(MetricsError, match="different lengths"):
            compute_metrics(np.arange(3), None, 0.2, np.ones(3), np.ones(3), np.zeros((2, 2)), np.zeros(2))
