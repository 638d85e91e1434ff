"""
Zero-order-hold discretization of the reduced model.

Produces the sampled model  x_{k+1} = A_d x_k + b_d(alpha) u_k,
y_k = c_d(alpha) x_k  at the measurement rate.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DiscretizationError
from .model_reduction import ParamDomain, ReducedModel
from .taylor import taylor_derivative, taylor_sum

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_TIME = 1.0 / 250.0


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """
    Sampled reduced model.

    ``b_taylor`` has shape (k_B + 1, n), ``c_vol_taylor`` (k_C + 1, n) and
    ``c_peak`` (n,); the peak output does not depend on alpha.
    """
    A: np.ndarray
    b_taylor: np.ndarray
    c_vol_taylor: np.ndarray
    c_peak: np.ndarray
    sample_time: float
    domain: ParamDomain

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def k_b(self) -> int:
        return len(self.b_taylor) - 1

    @property
    def k_c(self) -> int:
        return len(self.c_vol_taylor) - 1

    def b(self, alpha: float) -> np.ndarray:
        return taylor_sum(self.b_taylor, alpha)

    def db_dalpha(self, alpha: float) -> np.ndarray:
        return taylor_derivative(self.b_taylor, alpha)

    def c_vol(self, alpha: float) -> np.ndarray:
        return taylor_sum(self.c_vol_taylor, alpha)

    def dc_vol_dalpha(self, alpha: float) -> np.ndarray:
        return taylor_derivative(self.c_vol_taylor, alpha)

    def step(self, x: np.ndarray, alpha: float, u: float) -> np.ndarray:
        """One sample of the state recursion."""
        return self.A @ x + self.b(alpha) * u

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))


def discretize_zoh(reduced: ReducedModel, sample_time: float = DEFAULT_SAMPLE_TIME) -> DiscreteModel:
    """
    Exact discretization under piecewise-constant input.

    ``A_d = expm(A_r T_s)`` and ``b_d,i = A_r^-1 (A_d - I) b_r,i`` for every
    Taylor coefficient; output rows are carried over unchanged.

    Args:
        reduced: Reduced continuous-time model
        sample_time: Sampling period T_s in seconds

    Returns:
        DiscreteModel

    Raises:
        DiscretizationError: If A_r is not Hurwitz or T_s is not positive
    """
    if not sample_time > 0:
        raise DiscretizationError(f"Sample time must be positive, got {sample_time}")
    eigenvalues = np.linalg.eigvals(reduced.A)
    if np.any(eigenvalues.real >= 0):
        raise DiscretizationError(
            f"Reduced system matrix is not Hurwitz (max real eigenvalue {eigenvalues.real.max():.3e})"
        )

    A_d = la.expm(reduced.A * sample_time)
    b_d = la.solve(reduced.A, (A_d - np.eye(reduced.order)) @ reduced.b_taylor.T).T
    model = DiscreteModel(
        A=A_d,
        b_taylor=b_d,
        c_vol_taylor=np.array(reduced.c_taylor[:, 0, :]),
        c_peak=np.array(reduced.c_taylor[0, 1, :]),
        sample_time=sample_time,
        domain=reduced.domain,
    )
    radius = model.spectral_radius()
    if not radius < 1.0:
        raise DiscretizationError(f"Discrete model is not stable (spectral radius {radius:.6f})")
    logger.info(f"ZOH discretization at T_s = {sample_time:g} s, spectral radius {radius:.6f}")
    return model
