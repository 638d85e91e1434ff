"""
Run comparison
==============

Collects the summaries of several finished runs into one table. Runs are
only comparable when they share the same sample instants.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from ..core.errors import ComparisonError
from .artifacts import FAILED_MARKER, ArtifactStore, read_csv

logger = logging.getLogger(__name__)

COMPARISON_HEADER = [
    "run",
    "estimator",
    "convergence_time",
    "overshoot",
    "steady_e_x",
    "final_alpha_error",
    "mean_step_ms",
    "delta_convergence_time",
    "delta_steady_e_x",
]


@dataclass(frozen=True)
class RunSummary:
    """Per-estimator summary numbers of one run directory."""
    name: str
    times: np.ndarray
    rows: Dict[str, Dict[str, float]]


def load_run(run_dir: Union[str, Path]) -> RunSummary:
    """
    Read ``summary.csv``, ``metrics.csv`` and ``timing_summary.csv`` of a run.

    Raises:
        ComparisonError: If the run failed or its artifacts are missing
    """
    run_dir = Path(run_dir)
    if (run_dir / FAILED_MARKER).exists():
        raise ComparisonError(f"Run {run_dir} is marked as failed")
    try:
        _, summary = read_csv(run_dir / "summary.csv")
        _, metrics = read_csv(run_dir / "metrics.csv")
    except (OSError, StopIteration) as e:
        raise ComparisonError(f"Run {run_dir} has no readable summary: {e}")

    timing = {}
    timing_path = run_dir / "timing_summary.csv"
    if timing_path.exists():
        _, columns = read_csv(timing_path)
        timing = dict(zip(columns["estimator"], columns["mean_ms"]))

    rows = {}
    for i, estimator in enumerate(summary["estimator"]):
        rows[str(estimator)] = {
            "convergence_time": float(summary["convergence_time"][i]),
            "overshoot": float(summary["overshoot"][i]),
            "steady_e_x": float(summary["steady_e_x"][i]),
            "final_alpha_error": float(summary["final_alpha_error"][i]),
            "mean_step_ms": float(timing.get(estimator, math.nan)),
        }
    return RunSummary(name=run_dir.name, times=metrics["t"], rows=rows)


def _difference(value: float, reference: float) -> float:
    if math.isinf(value) and math.isinf(reference):
        return 0.0
    return value - reference


def compare_runs(run_dirs: Sequence[Union[str, Path]], output_root: Union[str, Path],
                 name: str = "comparison") -> Path:
    """
    Write ``comparison.csv`` and ``summary.txt`` for the given runs.

    Differences are taken against the first run that contains the same
    estimator variant.

    Returns:
        Directory holding the comparison artifacts

    Raises:
        ComparisonError: If fewer than two runs are given or time bases differ
    """
    if len(run_dirs) < 2:
        raise ComparisonError("At least two runs are needed for a comparison")
    runs = [load_run(run_dir) for run_dir in run_dirs]

    reference = runs[0]
    for run in runs[1:]:
        if run.times.shape != reference.times.shape or not np.allclose(run.times, reference.times, rtol=0, atol=1e-12):
            raise ComparisonError(f"Run {run.name} uses a different time base than {reference.name}")

    baselines: Dict[str, Dict[str, float]] = {}
    rows: List[list] = []
    for run in runs:
        for estimator, values in run.rows.items():
            baseline = baselines.setdefault(estimator, values)
            rows.append([
                run.name,
                estimator,
                values["convergence_time"],
                values["overshoot"],
                values["steady_e_x"],
                values["final_alpha_error"],
                values["mean_step_ms"],
                _difference(values["convergence_time"], baseline["convergence_time"]),
                _difference(values["steady_e_x"], baseline["steady_e_x"]),
            ])

    store = ArtifactStore(output_root, name)
    store.write_rows("comparison.csv", COMPARISON_HEADER, rows)
    store.write_text("summary.txt", _render(rows))
    logger.info(f"Compared {len(runs)} runs into {store.run_dir}")
    return store.run_dir


def _render(rows: List[list]) -> str:
    lines = [f"{'run':<24} {'estimator':<12} {'t_conv [s]':>11} {'overshoot':>10} {'e_x':>11} {'step [ms]':>10}"]
    for row in rows:
        lines.append(
            f"{row[0]:<24} {row[1]:<12} {row[2]:>11.4g} {row[3]:>10.4g} {row[4]:>11.4g} {row[6]:>10.4g}"
        )
    return "\n".join(lines) + "\n"
