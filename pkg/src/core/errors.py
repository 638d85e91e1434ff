"""
LaserFlow error hierarchy
=========================

Domain exceptions raised by the model, reduction, simulation and
estimation components. The pipeline turns any ``LaserFlowError`` into a
machine-readable error record.
"""

from typing import Any, Dict, Optional, Sequence


class LaserFlowError(Exception):
    """Base class for all LaserFlow errors."""

    def to_record(self) -> Dict[str, Any]:
        """Return a JSON-serializable description of the error."""
        return {"type": type(self).__name__, "message": str(self)}


class GeometryError(LaserFlowError):
    """Invalid layer stack, material constants or cylinder dimensions."""
    pass


class GridError(LaserFlowError):
    """Requested node counts cannot produce a valid axisymmetric grid."""
    pass


class ReductionError(LaserFlowError):
    """Model order reduction failed or produced an invalid reduced model."""

    def __init__(self, message: str, shifts: Optional[Sequence[complex]] = None,
                 condition_number: Optional[float] = None):
        super().__init__(message)
        self.shifts = list(shifts) if shifts is not None else None
        self.condition_number = condition_number

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        if self.shifts is not None:
            record["shifts"] = [[float(s.real), float(s.imag)] for s in map(complex, self.shifts)]
        if self.condition_number is not None:
            record["condition_number"] = float(self.condition_number)
        return record


class DiscretizationError(LaserFlowError):
    """Time discretization rejected the reduced model (e.g. not Hurwitz)."""
    pass


class SimulationError(LaserFlowError):
    """Time-domain simulation diverged or received invalid inputs."""
    pass


class EstimationError(LaserFlowError):
    """Estimator hit an unrecoverable numerical condition."""
    pass


class ConfigError(LaserFlowError):
    """Run configuration is missing, malformed or violates the schema."""
    pass


class StageError(LaserFlowError):
    """A pipeline stage failed; wraps the original cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

    def to_record(self) -> Dict[str, Any]:
        if isinstance(self.cause, LaserFlowError):
            record = self.cause.to_record()
        else:
            record = {"type": type(self.cause).__name__, "message": str(self.cause)}
        record["stage"] = self.stage
        return record


class ModelFormatError(LaserFlowError):
    """Model document is missing fields or has an unsupported version."""
    pass


class MetricsError(LaserFlowError):
    """Truth and estimate series cannot be aligned."""
    pass


class ComparisonError(LaserFlowError):
    """Runs passed to a comparison are incompatible."""
    pass


class ArtifactPathError(LaserFlowError):
    """Artifact name would escape the run directory or is not a plain file name."""
    pass
