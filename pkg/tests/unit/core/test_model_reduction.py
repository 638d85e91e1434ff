"""
Unit tests for parametric model order reduction
===============================================
"""

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from src.core.errors import ReductionError
from src.core.model_reduction import (
    ParamDomain,
    balanced_truncation,
    build_augmented_system,
    check_monotone_error,
    dc_gain_error,
    free_pole_indices,
    h2_norm,
    irka,
    moment_factor,
    moment_matrix,
    normalize_state,
    parametric_h2_norm,
    reduce,
)


class TestParamDomain:
    """Test the parameter interval."""

    def test_length_and_contains(self):
        """Test basic interval queries."""
        domain = ParamDomain(-0.5, 0.5)
        assert domain.length == 1.0
        assert domain.contains(0.5)
        assert not domain.contains(0.51)
        assert domain.clip(0.7) == 0.5

    def test_domain_must_contain_zero(self):
        """Test that the Taylor center must lie in the domain."""
        with pytest.raises(ReductionError, match="contain 0"):
            ParamDomain(0.1, 0.5)

    def test_empty_domain(self):
        """Test rejection of degenerate intervals."""
        with pytest.raises(ReductionError, match="Empty"):
            ParamDomain(0.0, 0.0)

    def test_quadrature_integrates_polynomials(self):
        """Test Gauss-Legendre nodes on a shifted interval."""
        domain = ParamDomain(-0.2, 0.6)
        nodes, weights = domain.quadrature(4)
        assert np.sum(weights * nodes ** 3) == pytest.approx((0.6 ** 4 - 0.2 ** 4) / 4)


class TestMoments:
    """Test moment matrices and their factorization."""

    def test_symmetric_domain_entries(self):
        """Test closed-form moments on [-1/2, 1/2]."""
        M = moment_matrix(ParamDomain(-0.5, 0.5), 2)
        expected = np.array([
            [1.0, 0.0, 1.0 / 12.0],
            [0.0, 1.0 / 12.0, 0.0],
            [1.0 / 12.0, 0.0, 1.0 / 80.0],
        ])
        assert_allclose(M, expected, atol=1e-15)

    def test_moments_match_quadrature(self):
        """Test moments against numerical integration."""
        domain = ParamDomain(-0.3, 0.7)
        nodes, weights = domain.quadrature(10)
        powers = nodes[None, :] ** np.arange(5)[:, None]
        assert_allclose(moment_matrix(domain, 4), (powers * weights) @ powers.T, rtol=1e-12)

    def test_factor_reproduces_matrix(self):
        """Test L L^T = M for a well-conditioned moment matrix."""
        M = moment_matrix(ParamDomain(-0.5, 0.5), 3)
        L = moment_factor(M)
        assert_allclose(L @ L.T, M, atol=1e-14)

    def test_factor_drops_null_directions(self):
        """Test that high orders lose numerically null directions."""
        M = moment_matrix(ParamDomain(-0.5, 0.5), 12)
        L = moment_factor(M)
        assert L.shape[1] < 13
        assert np.linalg.norm(L @ L.T - M) < 1e-10 * np.linalg.norm(M)

    def test_negative_order_rejected(self):
        """Test validation of the moment order."""
        with pytest.raises(ReductionError):
            moment_matrix(ParamDomain(), -1)


class TestAugmentedSystem:
    """Test the moment-weighted MIMO system."""

    def test_dimensions(self, small_system, small_model):
        """Test input and output counts."""
        assert small_system.B.shape[0] == small_model.n_f
        assert small_system.n_inputs == small_system.input_factor.shape[1]
        assert small_system.n_outputs == small_system.output_factor.shape[1] + 1

    def test_input_gramian_matches_parameter_integral(self, small_system, small_model, domain):
        """Test B B^T = int_D b(alpha) b(alpha)^T d alpha."""
        nodes, weights = domain.quadrature(12)
        integral = sum(w * np.outer(small_model.b(a), small_model.b(a)) for a, w in zip(nodes, weights))
        gramian = small_system.B @ small_system.B.T
        assert np.linalg.norm(gramian - integral) < 1e-8 * np.linalg.norm(integral)

    @pytest.mark.numerics
    def test_h2_norm_equals_parametric_norm(self, geometry, small_grid_settings, domain):
        """Test the norm equivalence for a parameter-independent output."""
        from src.core.fundus_model import build_full_order_model

        model = build_full_order_model(geometry, small_grid_settings, k_b=4, k_c=0)
        system = build_augmented_system(model, domain)
        augmented = h2_norm(model.A, system.B, system.C)
        parametric = parametric_h2_norm(model.A, model.b_taylor, model.c_taylor, domain, n_points=6)
        assert augmented == pytest.approx(parametric, rel=1e-6)

    @pytest.mark.numerics
    def test_shared_parameter_integral_needs_constant_output(self, geometry, small_grid_settings, domain):
        """Test that the tensor rule equals |D| int_D ||H(., alpha)||^2 only for a constant output."""
        from src.core.fundus_model import build_full_order_model

        def shared_alpha_norm(model):
            A = model.A.toarray()
            nodes, weights = domain.quadrature(6)
            total = 0.0
            for alpha, weight in zip(nodes, weights):
                b = model.b(alpha)[:, None]
                gramian = scipy.linalg.solve_continuous_lyapunov(A, -b @ b.T)
                C = model.C(alpha)
                total += weight * float(np.trace(C @ gramian @ C.T))
            return np.sqrt(domain.length * total)

        for k_c, equal in ((0, True), (4, False)):
            model = build_full_order_model(geometry, small_grid_settings, k_b=4, k_c=k_c)
            tensor = parametric_h2_norm(model.A, model.b_taylor, model.c_taylor, domain, n_points=6)
            assert (tensor == pytest.approx(shared_alpha_norm(model), rel=1e-6)) is equal

    def test_h2_norm_of_scalar_system(self):
        """Test ||1 / (s + a)||_H2 = 1 / sqrt(2a)."""
        assert h2_norm(np.array([[-2.0]]), np.array([[1.0]]), np.array([[1.0]])) == pytest.approx(0.5)


class TestReduction:
    """Test IRKA, balanced truncation and the reduced model."""

    def test_irka_converges(self, small_system):
        """Test that IRKA reaches the shift tolerance."""
        V, W, info = irka(small_system, 3, max_iterations=100, tolerance=1e-6)
        assert V.shape == (small_system.model.n_f, 3)
        assert W.shape == (small_system.model.n_f, 3)
        assert info["converged"]
        assert info["iterations"] <= 100
        assert all(complex(s).real > 0 for s in info["shifts"])
        assert len(info["shifts"]) == 2
        assert info["fixed_shifts"] == (0.0,)

    def test_irka_without_dc_interpolation(self, small_system):
        """Test plain tangential IRKA with all shifts iterated."""
        V, W, info = irka(small_system, 3, dc_interpolation=False)
        assert V.shape == W.shape == (small_system.model.n_f, 3)
        assert len(info["shifts"]) == 3
        assert info["fixed_shifts"] == ()

    def test_slowest_real_pole_gives_way_to_dc_point(self):
        """Test the choice of poles mirrored into free shifts."""
        assert list(free_pole_indices(np.array([-1.0, -10.0, -100.0], dtype=complex), 2)) == [1, 2]
        poles = np.array([-1.0 + 1.0j, -1.0 - 1.0j, -50.0])
        assert list(free_pole_indices(poles, 2)) == [0, 1]
        assert free_pole_indices(poles[:2], 1) is None

    def test_reduced_model_properties(self, small_reduced):
        """Test order, Hurwitz stability and conditioning."""
        assert small_reduced.order == 3
        assert small_reduced.is_hurwitz()
        assert small_reduced.projection_condition() < 1e6
        assert small_reduced.b_taylor.shape == (9, 3)
        assert small_reduced.c_taylor.shape == (9, 2, 3)

    def test_projection_identities(self, small_reduced, small_model):
        """Test A_r, b_r and C_r against explicit projection."""
        small_reduced.verify_projection(small_model)
        assert_allclose(small_reduced.c_taylor, small_model.c_taylor @ small_reduced.V)

    def test_state_normalization(self, small_reduced):
        """Test ||x_ss|| = 1e-8 |y_ss| at the nominal parameter."""
        x_ss = small_reduced.steady_state(0.0, 1.0)
        y_ss = small_reduced.C(0.0)[0] @ x_ss
        assert np.linalg.norm(x_ss) == pytest.approx(1e-8 * abs(y_ss), rel=1e-10)

    def test_normalization_preserves_transfer_function(self, small_reduced):
        """Test that rescaling leaves outputs unchanged."""
        rescaled = normalize_state(small_reduced, 1e-3)
        s = 7.0
        original = small_reduced.C(0.1) @ np.linalg.solve(s * np.eye(3) - small_reduced.A, small_reduced.b(0.1))
        transformed = rescaled.C(0.1) @ np.linalg.solve(s * np.eye(3) - rescaled.A, rescaled.b(0.1))
        assert_allclose(transformed, original, rtol=1e-10)

    def test_nominal_steady_state_is_interpolated(self, small_model, small_reduced):
        """Test that the s = 0 interpolation point reproduces both nominal steady outputs."""
        assert small_reduced.method == "irka"
        assert dc_gain_error(small_model, small_reduced, 0.0, 0.03) < 1e-8
        full = small_model.C(0.0) @ small_model.steady_state(0.0, 0.03)
        reduced = small_reduced.C(0.0) @ small_reduced.steady_state(0.0, 0.03)
        assert_allclose(reduced, full, rtol=1e-8)

    @pytest.mark.parametrize("alpha", [-0.3, 0.3])
    def test_steady_state_error_off_nominal(self, small_model, small_reduced, alpha):
        """Test the steady-state volume output away from the interpolated parameter."""
        assert dc_gain_error(small_model, small_reduced, alpha, 0.03) < 2e-2

    def test_dc_tolerance_rejects_inaccurate_models(self, small_system):
        """Test that reduce raises when the steady-state bound is missed."""
        with pytest.raises(ReductionError, match="steady-state volume output"):
            reduce(small_system, 2, method="balanced_truncation", dc_tolerance=1e-12)

    def test_dc_tolerance_accepts_interpolating_irka(self, small_system):
        """Test that the default IRKA passes a 1 % steady-state bound."""
        assert reduce(small_system, 3, dc_tolerance=1e-2).method == "irka"

    def test_projection_roundtrip(self, small_reduced):
        """Test that projecting a lifted state recovers it."""
        x_r = np.array([1e-9, -2e-9, 3e-9])
        assert_allclose(small_reduced.project_state(small_reduced.lift_state(x_r)), x_r, rtol=1e-8)
        rows = np.vstack((x_r, 2 * x_r))
        assert small_reduced.project_state(small_reduced.lift_state(rows)).shape == (2, 3)

    def test_balanced_truncation(self, small_system, small_model):
        """Test the square-root method and its biorthogonal bases."""
        V, W, info = balanced_truncation(small_system, 3)
        assert_allclose(W.T @ V, np.eye(3), atol=1e-8)
        assert np.all(np.diff(info["hankel"]) <= 0)
        reduced = reduce(small_system, 3, method="balanced_truncation")
        assert reduced.method == "balanced_truncation"
        assert dc_gain_error(small_model, reduced) < 5e-2

    def test_identity_projection_at_full_order(self, geometry, domain):
        """Test that n = n_f reproduces the full model exactly."""
        from src.core.fundus_model import GridSettings, build_full_order_model

        model = build_full_order_model(
            geometry, GridSettings(n_radial=8, n_inner=2, nodes_per_layer=(2, 3, 2, 2, 2)), k_b=2, k_c=2
        )
        reduced = reduce(build_augmented_system(model, domain), model.n_f)
        assert reduced.method == "identity"
        assert_allclose(reduced.A, model.A.toarray())
        assert_allclose(reduced.b_taylor, model.b_taylor)

    def test_invalid_order(self, small_system):
        """Test rejection of orders outside [1, n_f]."""
        with pytest.raises(ReductionError, match="Reduced order"):
            reduce(small_system, 0)

    def test_unknown_method(self, small_system):
        """Test rejection of unknown reduction methods."""
        with pytest.raises(ReductionError, match="Unknown reduction method"):
            reduce(small_system, 2, method="pod")

    def test_non_convergence_without_fallback(self, small_system):
        """Test that a capped IRKA run raises when fallback is disabled."""
        with pytest.raises(ReductionError, match="did not converge") as excinfo:
            reduce(small_system, 3, max_iterations=1, tolerance=1e-14, fallback=False)
        assert excinfo.value.shifts is not None
        assert "shifts" in excinfo.value.to_record()

    def test_non_convergence_falls_back(self, small_system):
        """Test the balanced-truncation fallback."""
        reduced = reduce(small_system, 3, max_iterations=1, tolerance=1e-14, fallback=True)
        assert reduced.method == "balanced_truncation"
        assert reduced.is_hurwitz()


class TestMonotoneError:
    """Test the error-versus-order check."""

    def test_monotone_sequence(self):
        """Test a decreasing error sequence."""
        assert check_monotone_error([(1, 1e-1), (2, 1e-2), (3, 1e-3)])

    def test_small_violation_warns(self):
        """Test that growth within tolerance returns False."""
        assert not check_monotone_error([(1, 1e-2), (2, 1.05e-2)])

    def test_large_violation_raises(self):
        """Test that growth beyond tolerance raises."""
        with pytest.raises(ReductionError, match="grew"):
            check_monotone_error([(1, 1e-3), (2, 1e-2)])
