"""
Estimation metrics
==================

Error time series and summary numbers used to compare estimators against
a truth stream.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MetricsError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MetricSeries:
    """Per-sample metrics of one estimator run."""
    times: np.ndarray
    state_error: np.ndarray  # e_x
    relative_noise: np.ndarray  # d_n
    alpha_error: np.ndarray  # |alpha_hat - alpha_true|


@dataclass(frozen=True)
class MetricSummary:
    """Scalar summary of one estimator run."""
    convergence_time: float
    overshoot: float
    steady_state_error: float
    final_alpha_error: float


def relative_state_error(x_true: np.ndarray, alpha_true: float, x_hat: np.ndarray,
                         alpha_hat: np.ndarray, state_scale: float = 1e-8) -> np.ndarray:
    """
    Relative error of the augmented state [x; alpha] in scaled coordinates.

    Both vectors are mapped through T^-1 with T = diag(s, ..., s, 1) before
    taking norms. Samples with a zero true vector give 0 for a perfect
    estimate and nan otherwise.
    """
    x_true = np.atleast_2d(x_true)
    x_hat = np.atleast_2d(x_hat)
    steps = len(x_true)
    alpha_true = np.broadcast_to(np.asarray(alpha_true, dtype=float), (steps,))
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    if x_hat.shape != x_true.shape or alpha_hat.shape != (steps,):
        raise MetricsError(
            f"State series shapes differ: truth {x_true.shape}, estimate {x_hat.shape}, alpha {alpha_hat.shape}"
        )
    truth = np.column_stack((x_true / state_scale, alpha_true))
    difference = np.column_stack(((x_true - x_hat) / state_scale, alpha_true - alpha_hat))
    return _safe_ratio(np.linalg.norm(difference, axis=1), np.linalg.norm(truth, axis=1))


def relative_noise(y_clean: np.ndarray, y_meas: np.ndarray) -> np.ndarray:
    """Instantaneous relative noise |y - y_meas| / |y| per sample."""
    y_clean = np.asarray(y_clean, dtype=float)
    y_meas = np.asarray(y_meas, dtype=float)
    if y_clean.shape != y_meas.shape:
        raise MetricsError(f"Output series lengths differ: {y_clean.shape} vs {y_meas.shape}")
    return _safe_ratio(np.abs(y_clean - y_meas), np.abs(y_clean))


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    result = np.full(numerator.shape, np.nan)
    np.divide(numerator, denominator, out=result, where=denominator > 0)
    result[numerator == 0] = 0.0
    return result


def convergence_time(times: np.ndarray, alpha_hat: np.ndarray, alpha_true: float,
                     tolerance: float = 0.05) -> float:
    """
    First time after which |alpha_hat - alpha_true| stays below ``tolerance``.

    Returns ``inf`` if the estimate is outside the band at the last sample.
    """
    times = np.asarray(times, dtype=float)
    inside = np.abs(np.asarray(alpha_hat, dtype=float) - alpha_true) < tolerance
    if len(inside) != len(times):
        raise MetricsError(f"Time base has {len(times)} samples, estimate {len(inside)}")
    if len(inside) == 0 or not inside[-1]:
        return math.inf
    outside = np.flatnonzero(~inside)
    return float(times[0] if len(outside) == 0 else times[outside[-1] + 1])


def overshoot(alpha_hat: np.ndarray, alpha_true: float, alpha_initial: float = 0.0) -> float:
    """Largest excursion of the estimate beyond the truth, seen from the initial value."""
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    if alpha_true == alpha_initial:
        return float(np.max(np.abs(alpha_hat - alpha_true)))
    direction = math.copysign(1.0, alpha_true - alpha_initial)
    return float(max(0.0, np.max(direction * (alpha_hat - alpha_true))))


def relative_l2_error(reference: np.ndarray, approximation: np.ndarray) -> float:
    """Discrete relative L2 error of two equally sampled signals."""
    reference = np.asarray(reference, dtype=float)
    approximation = np.asarray(approximation, dtype=float)
    if reference.shape != approximation.shape:
        raise MetricsError(f"Signal lengths differ: {reference.shape} vs {approximation.shape}")
    return float(np.linalg.norm(reference - approximation) / np.linalg.norm(reference))


def compute_metrics(times: np.ndarray, x_true: Optional[np.ndarray], alpha_true: float,
                    y_clean: np.ndarray, y_meas: np.ndarray, x_hat: np.ndarray,
                    alpha_hat: np.ndarray, state_scale: float = 1e-8) -> MetricSeries:
    """
    Metric time series of one estimator run against its truth stream.

    ``x_true`` may be None when no reduced truth state exists; e_x is then nan.
    """
    times = np.asarray(times, dtype=float)
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    if not (len(times) == len(y_clean) == len(y_meas) == len(alpha_hat) == len(x_hat)):
        raise MetricsError("Truth and estimate series have different lengths")
    if x_true is None:
        state_error = np.full(len(times), np.nan)
    else:
        state_error = relative_state_error(x_true, alpha_true, x_hat, alpha_hat, state_scale)
    return MetricSeries(
        times=times,
        state_error=state_error,
        relative_noise=relative_noise(y_clean, y_meas),
        alpha_error=np.abs(alpha_hat - alpha_true),
    )


def summarize(series: MetricSeries, alpha_hat: np.ndarray, alpha_true: float,
              tolerance: float = 0.05, settle_time: float = 0.5) -> MetricSummary:
    """Convergence time, overshoot and the median e_x after ``settle_time``."""
    settled = series.state_error[series.times > settle_time]
    settled = settled[np.isfinite(settled)]
    return MetricSummary(
        convergence_time=convergence_time(series.times, alpha_hat, alpha_true, tolerance),
        overshoot=overshoot(alpha_hat, alpha_true),
        steady_state_error=float(np.median(settled)) if len(settled) else math.nan,
        final_alpha_error=float(series.alpha_error[-1]),
    )
