"""
LaserFlow Harness
=================

Run configuration, experiment pipeline, artifact persistence and run comparison.
"""

from .compare import compare_runs
from .config import RunConfig, load_config
from .pipeline import ExperimentPipeline, PipelineResult

__all__ = ["ExperimentPipeline", "PipelineResult", "RunConfig", "compare_runs", "load_config"]
