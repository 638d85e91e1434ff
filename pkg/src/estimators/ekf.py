"""
Extended Kalman filter on the augmented model.

Covariances Q, R and P are given in the scaled coordinates of
``AugmentedModel``.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..core.errors import EstimationError
from .augmented_model import AugmentedModel
from .base import BaseEstimator, EstimateRecord, estimator_registry


@dataclass(frozen=True, eq=False)
class EkfState:
    """Scaled augmented mean and covariance."""
    z: np.ndarray
    P: np.ndarray


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def ekf_predict(model: AugmentedModel, state: EkfState, u: float, Q: np.ndarray,
                freeze_alpha_without_input: bool = True) -> EkfState:
    """
    A-priori step: z- = f(z, u),  P- = F P F^T + Q.

    With zero input the parameter is unobservable; its process noise is then
    dropped so the alpha variance does not grow without bound.
    """
    jacobian = model.transition_jacobian(state.z, u)
    process_noise = np.array(Q, dtype=float)
    if freeze_alpha_without_input and u == 0:
        process_noise[-1, :] = 0.0
        process_noise[:, -1] = 0.0
    return EkfState(
        z=model.transition(state.z, u),
        P=_symmetrize(jacobian @ state.P @ jacobian.T + process_noise),
    )


def ekf_update(model: AugmentedModel, state: EkfState, y: float, R: float) -> Tuple[EkfState, float]:
    """
    Measurement update with the Joseph-form covariance.

    Returns:
        Tuple of (a-posteriori state, innovation y - g(z-))

    Raises:
        EstimationError: If the innovation covariance is not positive
    """
    row = model.output_jacobian(state.z)
    innovation_covariance = float(row @ state.P @ row) + R
    if not innovation_covariance > 0 or not np.isfinite(innovation_covariance):
        raise EstimationError(
            f"Innovation covariance {innovation_covariance:.3e} is not positive; check Q/R tuning and scaling"
        )
    gain = state.P @ row / innovation_covariance
    innovation = y - model.output(state.z)
    correction = np.eye(model.dim) - np.outer(gain, row)
    covariance = correction @ state.P @ correction.T + R * np.outer(gain, gain)
    return EkfState(z=state.z + gain * innovation, P=_symmetrize(covariance)), innovation


class ExtendedKalmanFilter(BaseEstimator):
    """
    Joint state/parameter EKF.

    Starts from x = 0, alpha = ``alpha0`` and P0 = Q unless given.
    """

    def __init__(self, name: str, model: AugmentedModel, Q: np.ndarray, R: float,
                 P0: Optional[np.ndarray] = None, alpha0: float = 0.0,
                 freeze_alpha_without_input: bool = True):
        super().__init__(name, model)
        self.Q = np.array(Q, dtype=float)
        self.R = float(R)
        self.P0 = self.Q.copy() if P0 is None else np.array(P0, dtype=float)
        self.alpha0 = float(alpha0)
        self.freeze_alpha_without_input = freeze_alpha_without_input
        if self.Q.shape != (model.dim, model.dim) or self.P0.shape != (model.dim, model.dim):
            raise EstimationError(f"Q and P0 must be {model.dim}x{model.dim} matrices")
        if not self.R > 0:
            raise EstimationError(f"Measurement variance R must be positive, got {self.R}")
        self.state = None
        self.reset()

    def reset(self) -> None:
        self.state = EkfState(z=self.model.to_scaled(np.zeros(self.model.order), self.alpha0), P=self.P0.copy())
        self.samples = 0

    def get_capabilities(self) -> List[str]:
        return ["joint_state_parameter", "covariance", "recursive"]

    def _process(self, u_prev: Optional[float], y: float) -> EstimateRecord:
        if u_prev is not None:
            self.state = ekf_predict(self.model, self.state, u_prev, self.Q, self.freeze_alpha_without_input)
        self.state, innovation = ekf_update(self.model, self.state, y, self.R)
        x, alpha = self.model.from_scaled(self.state.z)
        return EstimateRecord(
            x=x,
            alpha=alpha,
            y_vol=self.model.output(self.state.z),
            y_peak=self.model.peak_output(self.state.z),
            innovation=innovation,
        )


def default_process_noise(order: int, state_variance: float = 1e-3,
                          alpha_variance: float = 0.15) -> np.ndarray:
    """diag(q_x, ..., q_x, q_alpha) in scaled coordinates."""
    return np.diag(np.append(np.full(order, state_variance), alpha_variance))


def _create_ekf(name: str, model: AugmentedModel, settings: Dict[str, Any]) -> ExtendedKalmanFilter:
    Q = settings.get("Q")
    if Q is None:
        Q = default_process_noise(model.order, settings.get("q_state", 1e-3), settings.get("q_alpha", 0.15))
    return ExtendedKalmanFilter(
        name,
        model,
        Q=Q,
        R=settings.get("R", 1e2),
        P0=settings.get("P0"),
        alpha0=settings.get("alpha0", 0.0),
        freeze_alpha_without_input=settings.get("freeze_alpha_without_input", True),
    )


estimator_registry.register("ekf", _create_ekf)
