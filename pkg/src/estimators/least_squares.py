"""
Box-constrained nonlinear least squares.

Projected Gauss-Newton with Levenberg-Marquardt damping for problems
min ||r(theta)||^2 subject to lower <= theta <= upper. Bounds may be
infinite. Variables sitting on a bound with the gradient pushing outward
are frozen for the step; every trial point is projected onto the box.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

logger = logging.getLogger(__name__)

MIN_DAMPING = 1e-12
MAX_DAMPING = 1e12


@dataclass(frozen=True, eq=False)
class LeastSquaresResult:
    """Solver outcome; ``cost`` is the plain sum of squared residuals."""
    theta: np.ndarray
    cost: float
    iterations: int
    converged: bool
    projected_gradient_norm: float
    damping: float


def projected_gradient(theta: np.ndarray, gradient: np.ndarray, lower: np.ndarray,
                       upper: np.ndarray) -> np.ndarray:
    """theta - P(theta - gradient); zero exactly at first-order stationary points."""
    return theta - np.clip(theta - gradient, lower, upper)


def solve_box_least_squares(residual: Callable[[np.ndarray], np.ndarray],
                            jacobian: Callable[[np.ndarray], np.ndarray],
                            theta0: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                            max_iterations: int = 50, step_tolerance: float = 1e-9,
                            gradient_tolerance: float = 1e-6,
                            damping: float = 1e-3) -> LeastSquaresResult:
    """
    Minimize ``||residual(theta)||^2`` on a box.

    Args:
        residual: Residual vector function
        jacobian: Jacobian of the residual vector
        theta0: Starting point (projected onto the box)
        lower: Lower bounds (may contain -inf)
        upper: Upper bounds (may contain +inf)
        max_iterations: Outer iteration limit
        step_tolerance: Stop once a step (accepted or trial) is shorter than this
        gradient_tolerance: Converged when the projected gradient norm is at most
            ``gradient_tolerance * (1 + cost)``
        damping: Initial Levenberg-Marquardt parameter

    Returns:
        LeastSquaresResult; ``converged`` is False when the iteration limit is
        reached or no decrease can be found at a non-stationary point.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    theta = np.clip(np.asarray(theta0, dtype=float), lower, upper)
    r = residual(theta)
    cost = float(r @ r)
    iteration = 0
    short_step = False

    while True:
        J = jacobian(theta)
        gradient = J.T @ r
        gradient_norm = float(np.linalg.norm(projected_gradient(theta, 2.0 * gradient, lower, upper)))
        stationary = gradient_norm <= gradient_tolerance * (1.0 + cost)
        if stationary or short_step or iteration >= max_iterations:
            break
        iteration += 1

        # Bound-active variables with an outward gradient are frozen for this step
        blocked = ((theta <= lower) & (gradient > 0)) | ((theta >= upper) & (gradient < 0))
        free = ~blocked
        J_free = J[:, free]
        normal = J_free.T @ J_free
        scaling = np.maximum(np.diag(normal), 1e-12 * max(float(np.max(np.diag(normal), initial=0.0)), 1.0))

        accepted = False
        while damping <= MAX_DAMPING:
            try:
                step_free = la.solve(normal + damping * np.diag(scaling), -gradient[free], assume_a="pos")
            except (la.LinAlgError, ValueError):
                damping *= 10.0
                logger.debug(f"Singular Gauss-Newton system, damping raised to {damping:.1e}")
                continue
            step = np.zeros_like(theta)
            step[free] = step_free
            trial = np.clip(theta + step, lower, upper)
            r_trial = residual(trial)
            cost_trial = float(r_trial @ r_trial)
            if cost_trial < cost:
                accepted = True
                break
            if np.linalg.norm(trial - theta) < step_tolerance:
                break
            damping *= 10.0

        if not accepted:
            break

        step_length = float(np.linalg.norm(trial - theta))
        short_step = step_length < step_tolerance
        theta, r, cost = trial, r_trial, cost_trial
        damping = max(damping / 3.0, MIN_DAMPING)
        logger.debug(f"Iteration {iteration}: cost {cost:.6e}, step {step_length:.3e}, damping {damping:.1e}")

    converged = stationary
    if not converged:
        logger.debug(f"Least squares stopped after {iteration} iterations, projected gradient {gradient_norm:.3e}")
    return LeastSquaresResult(
        theta=theta,
        cost=cost,
        iterations=iteration,
        converged=converged,
        projected_gradient_norm=gradient_norm,
        damping=damping,
    )
