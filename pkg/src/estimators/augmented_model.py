"""
Augmented state model for joint state and parameter estimation.

The reduced state is extended by the absorption prefactor alpha, which is
modeled as a random walk. All estimator arithmetic uses scaled coordinates
z = T^-1 [x; alpha] with T = diag(s, ..., s, 1).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..core.discrete_model import DiscreteModel
from ..core.taylor import taylor_derivative_batch, taylor_sum_batch


@dataclass(frozen=True, eq=False)
class AugmentedModel:
    """
    Transition f and output g of the augmented system in scaled coordinates.

    f(z, u) = [A_d z_x + b_d(alpha) u / s; alpha]
    g(z)    = s * c_vol(alpha) z_x
    """
    discrete: DiscreteModel
    state_scale: float = 1e-8

    @property
    def order(self) -> int:
        return self.discrete.order

    @property
    def dim(self) -> int:
        return self.discrete.order + 1

    @property
    def domain(self):
        return self.discrete.domain

    @property
    def scaling(self) -> np.ndarray:
        """Diagonal of T."""
        return np.append(np.full(self.order, self.state_scale), 1.0)

    def to_scaled(self, x: np.ndarray, alpha: float) -> np.ndarray:
        return np.append(np.asarray(x, dtype=float) / self.state_scale, alpha)

    def from_scaled(self, z: np.ndarray) -> Tuple[np.ndarray, float]:
        return z[:-1] * self.state_scale, float(z[-1])

    def scale_covariance(self, covariance: np.ndarray) -> np.ndarray:
        """Map a covariance from physical to scaled coordinates."""
        inverse = 1.0 / self.scaling
        return covariance * np.outer(inverse, inverse)

    def transition(self, z: np.ndarray, u: float) -> np.ndarray:
        alpha = z[-1]
        x_next = self.discrete.A @ z[:-1] + self.discrete.b(alpha) * (u / self.state_scale)
        return np.append(x_next, alpha)

    def transition_jacobian(self, z: np.ndarray, u: float) -> np.ndarray:
        """Jacobian [[A_d, db_d/dalpha u / s], [0, 1]] of f."""
        jacobian = np.zeros((self.dim, self.dim))
        jacobian[:-1, :-1] = self.discrete.A
        jacobian[:-1, -1] = self.discrete.db_dalpha(z[-1]) * (u / self.state_scale)
        jacobian[-1, -1] = 1.0
        return jacobian

    def output(self, z: np.ndarray) -> float:
        return float(self.state_scale * (self.discrete.c_vol(z[-1]) @ z[:-1]))

    def output_jacobian(self, z: np.ndarray) -> np.ndarray:
        """Row [s c_vol(alpha), s dc_vol/dalpha z_x] of g."""
        alpha = z[-1]
        return self.state_scale * np.append(
            self.discrete.c_vol(alpha), self.discrete.dc_vol_dalpha(alpha) @ z[:-1]
        )

    def peak_output(self, z: np.ndarray) -> float:
        return float(self.state_scale * (self.discrete.c_peak @ z[:-1]))

    # Batched counterparts over a stack of nodes Z of shape (m, dim)

    def transitions(self, Z: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """f applied row-wise, shape (m, dim)."""
        alphas = Z[:, -1]
        B = taylor_sum_batch(self.discrete.b_taylor, alphas)
        X_next = Z[:, :-1] @ self.discrete.A.T + B * (np.asarray(inputs, dtype=float) / self.state_scale)[:, None]
        return np.column_stack((X_next, alphas))

    def transition_jacobians(self, Z: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Stacked Jacobians of f, shape (m, dim, dim)."""
        jacobians = np.zeros((len(Z), self.dim, self.dim))
        jacobians[:, :-1, :-1] = self.discrete.A
        jacobians[:, :-1, -1] = (
            taylor_derivative_batch(self.discrete.b_taylor, Z[:, -1])
            * (np.asarray(inputs, dtype=float) / self.state_scale)[:, None]
        )
        jacobians[:, -1, -1] = 1.0
        return jacobians

    def outputs(self, Z: np.ndarray) -> np.ndarray:
        """g applied row-wise, shape (m,)."""
        C = taylor_sum_batch(self.discrete.c_vol_taylor, Z[:, -1])
        return self.state_scale * np.einsum("ij,ij->i", C, Z[:, :-1])

    def output_jacobians(self, Z: np.ndarray) -> np.ndarray:
        """Stacked output rows, shape (m, dim)."""
        alphas = Z[:, -1]
        C = taylor_sum_batch(self.discrete.c_vol_taylor, alphas)
        dC = taylor_derivative_batch(self.discrete.c_vol_taylor, alphas)
        return self.state_scale * np.column_stack((C, np.einsum("ij,ij->i", dC, Z[:, :-1])))
