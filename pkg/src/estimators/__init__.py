"""
LaserFlow estimators
====================

Joint state and absorption estimation on the sampled reduced model.
Importing this package registers the ``ekf`` and ``mhe`` kinds.
"""

__all__ = [
    "AugmentedModel",
    "BaseEstimator",
    "EstimateRecord",
    "ExtendedKalmanFilter",
    "MovingHorizonEstimator",
    "estimator_registry",
]

from .augmented_model import AugmentedModel
from .base import BaseEstimator, EstimateRecord, estimator_registry
from .ekf import ExtendedKalmanFilter
from .mhe import MovingHorizonEstimator
