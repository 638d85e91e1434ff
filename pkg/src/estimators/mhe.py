"""
Moving horizon estimation on the augmented model.

At every sample the estimator solves

    min  ||theta_0 - chi_0||^2_{P^-1}
       + sum_k |y_k - g(theta_k)|^2_{R^-1}
       + sum_k ||theta_{k+1} - f(theta_k, u_k)||^2_{Q^-1}
    s.t. alpha_k in D

over the window of the last N + 1 measurements, with theta_k the scaled
augmented state. Until N + 1 measurements are available the window simply
covers all of them.
"""

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Deque, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg as la

from ..core.errors import EstimationError
from .augmented_model import AugmentedModel
from .base import BaseEstimator, EstimateRecord, estimator_registry
from .ekf import default_process_noise
from .least_squares import LeastSquaresResult, solve_box_least_squares


def inverse_sqrt(matrix: np.ndarray) -> np.ndarray:
    """L^-1 for M = L L^T, so that ||L^-1 v||^2 = v^T M^-1 v."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    try:
        factor = la.cholesky(matrix, lower=True)
    except la.LinAlgError:
        raise EstimationError("Weighting matrix must be symmetric positive definite")
    return la.solve_triangular(factor, np.eye(len(matrix)), lower=True)


@dataclass(frozen=True, eq=False)
class MheWeights:
    """Inverse square roots of the arrival, process and measurement covariances."""
    arrival: np.ndarray
    process: np.ndarray
    measurement: float

    @classmethod
    def from_covariances(cls, P: np.ndarray, Q: np.ndarray, R: float) -> "MheWeights":
        if not R > 0:
            raise EstimationError(f"Measurement variance R must be positive, got {R}")
        return cls(arrival=inverse_sqrt(P), process=inverse_sqrt(Q), measurement=1.0 / np.sqrt(R))


@dataclass(eq=False)
class MheState:
    """Window buffers, arrival prior and the last window solution."""
    horizon: int
    prior: np.ndarray
    inputs: Deque[float] = field(default_factory=deque)
    measurements: Deque[float] = field(default_factory=deque)
    solution: Optional[np.ndarray] = None  # (window length, n + 1)

    def __post_init__(self):
        if self.horizon < 0:
            raise EstimationError(f"Horizon must be non-negative, got {self.horizon}")
        self.inputs = deque(self.inputs, maxlen=self.horizon)
        self.measurements = deque(self.measurements, maxlen=self.horizon + 1)


def mhe_residual(model: AugmentedModel, theta: np.ndarray, inputs: np.ndarray,
                 measurements: np.ndarray, prior: np.ndarray, weights: MheWeights) -> np.ndarray:
    """
    Weighted residual vector [arrival; outputs; process] of a window.

    The process residual is theta_{k+1} - f(theta_k, u_k). All nodes are
    evaluated in one batch.
    """
    nodes = theta.reshape(len(measurements), model.dim)
    arrival = weights.arrival @ (nodes[0] - prior)
    outputs = weights.measurement * (measurements - model.outputs(nodes))
    process = (nodes[1:] - model.transitions(nodes[:-1], inputs)) @ weights.process.T
    return np.concatenate((arrival, outputs, process.ravel()))


@dataclass(frozen=True, eq=False)
class _JacobianLayout:
    """Constant blocks of a window Jacobian and the positions of the varying ones."""
    template: np.ndarray
    output_index: Tuple[np.ndarray, np.ndarray]
    process_index: Tuple[np.ndarray, np.ndarray]


@lru_cache(maxsize=64)
def _jacobian_layout(weights: MheWeights, dim: int, steps: int) -> _JacobianLayout:
    transitions = steps - 1
    offset = dim + steps
    template = np.zeros((offset + transitions * dim, steps * dim))
    template[:dim, :dim] = weights.arrival
    for k in range(transitions):
        template[offset + k * dim:offset + (k + 1) * dim, (k + 1) * dim:(k + 2) * dim] = weights.process

    nodes = np.arange(steps)[:, None]
    output_index = (np.broadcast_to(dim + nodes, (steps, dim)), nodes * dim + np.arange(dim))
    blocks = np.arange(transitions)[:, None, None]
    local = np.arange(dim)
    process_index = (offset + blocks * dim + local[:, None], blocks * dim + local[None, :])
    return _JacobianLayout(template, output_index, process_index)


def mhe_jacobian(model: AugmentedModel, theta: np.ndarray, inputs: np.ndarray,
                 measurements: np.ndarray, prior: np.ndarray, weights: MheWeights) -> np.ndarray:
    """Analytic Jacobian of ``mhe_residual`` with respect to theta."""
    steps = len(measurements)
    nodes = theta.reshape(steps, model.dim)
    layout = _jacobian_layout(weights, model.dim, steps)
    jacobian = layout.template.copy()
    jacobian[layout.output_index] = -weights.measurement * model.output_jacobians(nodes)
    jacobian[layout.process_index] = -(weights.process @ model.transition_jacobians(nodes[:-1], inputs))
    return jacobian


def _bounds(model: AugmentedModel, steps: int) -> Tuple[np.ndarray, np.ndarray]:
    lower = np.full((steps, model.dim), -np.inf)
    upper = np.full((steps, model.dim), np.inf)
    lower[:, -1] = model.domain.alpha_min
    upper[:, -1] = model.domain.alpha_max
    return lower.ravel(), upper.ravel()


def mhe_step(model: AugmentedModel, state: MheState, u_prev: Optional[float], y: float,
             weights: MheWeights, max_iterations: int = 50,
             step_tolerance: float = 1e-9,
             gradient_tolerance: float = 1e-6) -> Tuple[MheState, LeastSquaresResult]:
    """
    Add one sample to the window, solve the window problem and update the prior.

    Args:
        model: Augmented model
        state: Estimator state (updated in place and returned)
        u_prev: Input applied since the previous measurement (None on the first sample)
        y: New measurement
        weights: Cost weights
        max_iterations: Solver iteration limit
        step_tolerance: Solver step tolerance
        gradient_tolerance: Relative projected-gradient tolerance for convergence

    Returns:
        Tuple of (state, solver result); the last window node is the current estimate
    """
    if state.solution is not None and u_prev is None:
        raise EstimationError("Input since the previous sample is required after the first step")

    sliding = len(state.measurements) == state.horizon + 1
    if state.solution is None:
        warm_start = state.prior[None, :]
    else:
        predicted = model.transition(state.solution[-1], u_prev)
        warm_start = np.vstack((state.solution, predicted))
        if sliding:
            state.prior = warm_start[1].copy()
            warm_start = warm_start[1:]

    if u_prev is not None:
        state.inputs.append(float(u_prev))
    state.measurements.append(float(y))
    inputs = np.array(state.inputs)
    measurements = np.array(state.measurements)

    lower, upper = _bounds(model, len(measurements))
    prior = state.prior
    result = solve_box_least_squares(
        lambda theta: mhe_residual(model, theta, inputs, measurements, prior, weights),
        lambda theta: mhe_jacobian(model, theta, inputs, measurements, prior, weights),
        warm_start.ravel(),
        lower,
        upper,
        max_iterations=max_iterations,
        step_tolerance=step_tolerance,
        gradient_tolerance=gradient_tolerance,
    )
    state.solution = result.theta.reshape(len(measurements), model.dim)
    return state, result


class MovingHorizonEstimator(BaseEstimator):
    """
    Joint state/parameter MHE with a box constraint on alpha.

    The arrival weight defaults to P = Q and the prior starts at x = 0,
    alpha = ``alpha0``.
    """

    def __init__(self, name: str, model: AugmentedModel, Q: np.ndarray, R: float,
                 P: Optional[np.ndarray] = None, horizon: int = 5, alpha0: float = 0.0,
                 max_iterations: int = 50, step_tolerance: float = 1e-9,
                 gradient_tolerance: float = 1e-6):
        super().__init__(name, model)
        Q = np.array(Q, dtype=float)
        P = Q.copy() if P is None else np.array(P, dtype=float)
        if Q.shape != (model.dim, model.dim) or P.shape != (model.dim, model.dim):
            raise EstimationError(f"Q and P must be {model.dim}x{model.dim} matrices")
        self.weights = MheWeights.from_covariances(P, Q, float(R))
        self.horizon = int(horizon)
        self.alpha0 = float(alpha0)
        self.max_iterations = max_iterations
        self.step_tolerance = step_tolerance
        self.gradient_tolerance = gradient_tolerance
        self.unconverged_steps = 0
        self.state = None
        self.reset()

    def reset(self) -> None:
        self.state = MheState(
            horizon=self.horizon,
            prior=self.model.to_scaled(np.zeros(self.model.order), self.alpha0),
        )
        self.samples = 0
        self.unconverged_steps = 0

    def get_capabilities(self) -> List[str]:
        return ["joint_state_parameter", "box_constraints", "windowed"]

    def _process(self, u_prev: Optional[float], y: float) -> EstimateRecord:
        self.state, result = mhe_step(
            self.model, self.state, u_prev, y, self.weights,
            self.max_iterations, self.step_tolerance, self.gradient_tolerance,
        )
        if not result.converged:
            self.unconverged_steps += 1
            self.logger.warning(
                f"Sample {self.samples}: window solver stopped after {result.iterations} iterations "
                f"(projected gradient {result.projected_gradient_norm:.3e})"
            )
        current = self.state.solution[-1]
        x, alpha = self.model.from_scaled(current)
        return EstimateRecord(
            x=x,
            alpha=alpha,
            y_vol=self.model.output(current),
            y_peak=self.model.peak_output(current),
            innovation=y - self.model.output(current),
            cost=result.cost,
            iterations=result.iterations,
            converged=result.converged,
        )


def _create_mhe(name: str, model: AugmentedModel, settings: Dict[str, Any]) -> MovingHorizonEstimator:
    Q = settings.get("Q")
    if Q is None:
        Q = default_process_noise(model.order, settings.get("q_state", 1e-3), settings.get("q_alpha", 0.15))
    P = settings.get("P")
    if P is None and "p_state" in settings:
        P = default_process_noise(model.order, settings["p_state"], settings["p_alpha"])
    return MovingHorizonEstimator(
        name,
        model,
        Q=Q,
        R=settings.get("R", 1e2),
        P=P,
        horizon=settings.get("horizon", 5),
        alpha0=settings.get("alpha0", 0.0),
        max_iterations=settings.get("max_iterations", 50),
        step_tolerance=settings.get("step_tolerance", 1e-9),
        gradient_tolerance=settings.get("gradient_tolerance", 1e-6),
    )


estimator_registry.register("mhe", _create_mhe)
