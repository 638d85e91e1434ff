"""
Estimator base class and registry
=================================

Common interface of the sequential estimators and a registry that creates
them by name from configuration blocks.
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .augmented_model import AugmentedModel


@dataclass(frozen=True, eq=False)
class EstimateRecord:
    """Estimate after processing one measurement, in physical coordinates."""
    x: np.ndarray
    alpha: float
    y_vol: float
    y_peak: float
    innovation: float
    cost: float = float("nan")
    iterations: int = 0
    converged: bool = True
    wall_time: float = 0.0


class BaseEstimator(ABC):
    """
    Sequential joint state/parameter estimator.

    ``step(u_prev, y)`` consumes the input applied since the previous
    measurement (None for the first sample) and the new measurement.
    """

    def __init__(self, name: str, model: AugmentedModel):
        self.name = name
        self.model = model
        self.logger = logging.getLogger(f"estimator.{name}")
        self.samples = 0

    @abstractmethod
    def reset(self) -> None:
        """Return to the initial estimate."""
        pass

    @abstractmethod
    def _process(self, u_prev: Optional[float], y: float) -> EstimateRecord:
        pass

    @abstractmethod
    def get_capabilities(self) -> List[str]:
        """Return the features of this estimator."""
        pass

    def step(self, u_prev: Optional[float], y: float) -> EstimateRecord:
        """Process one measurement and record the wall time of the step."""
        start = time.perf_counter()
        record = self._process(u_prev, float(y))
        self.samples += 1
        return _with_wall_time(record, time.perf_counter() - start)

    def run(self, inputs: np.ndarray, measurements: np.ndarray) -> List[EstimateRecord]:
        """Process a whole measurement stream from the initial estimate."""
        self.reset()
        records = []
        for k, y in enumerate(measurements):
            records.append(self.step(None if k == 0 else float(inputs[k - 1]), y))
        return records


def _with_wall_time(record: EstimateRecord, wall_time: float) -> EstimateRecord:
    return replace(record, wall_time=wall_time)


EstimatorFactory = Callable[[str, AugmentedModel, Dict[str, Any]], BaseEstimator]


class EstimatorRegistry:
    """Creates estimators by kind name."""

    def __init__(self):
        self.factories: Dict[str, EstimatorFactory] = {}
        self.logger = logging.getLogger("EstimatorRegistry")

    def register(self, kind: str, factory: EstimatorFactory) -> bool:
        """
        Register a factory for an estimator kind.

        Returns:
            bool: False if the kind is already registered
        """
        if kind in self.factories:
            self.logger.warning(f"Estimator kind {kind} already registered")
            return False
        self.factories[kind] = factory
        self.logger.debug(f"Registered estimator kind: {kind}")
        return True

    def create(self, kind: str, name: str, model: AugmentedModel,
               settings: Optional[Dict[str, Any]] = None) -> BaseEstimator:
        """Create a named estimator instance of the given kind."""
        if kind not in self.factories:
            raise KeyError(f"Unknown estimator kind '{kind}', available: {sorted(self.factories)}")
        return self.factories[kind](name, model, settings or {})

    def list_kinds(self) -> List[str]:
        return sorted(self.factories)


estimator_registry = EstimatorRegistry()
