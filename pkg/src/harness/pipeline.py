"""
Experiment pipeline
===================

Orchestrates one experiment run:

- assemble: full-order fundus model
- reduce: parametric reduction and ZOH discretization (or a cached model document)
- simulate: truth stream with measurement noise
- estimate: every configured estimator variant
- metrics: error series and summary numbers
- persist: CSV/JSON artifacts and the run manifest

Each stage is timed; a failing stage leaves its partial artifacts, an
error record and a FAILED marker in the run directory.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..core import __version__
from ..core.discrete_model import DiscreteModel, discretize_zoh
from ..core.errors import LaserFlowError, ModelFormatError, StageError
from ..core.fundus_model import FullOrderModel, build_full_order_model
from ..core.metrics import MetricSeries, MetricSummary, compute_metrics, relative_noise, summarize
from ..core.model_io import export_matrix_market, load_models, save_models
from ..core.model_reduction import ReducedModel, build_augmented_system, dc_gain_error, reduce
from ..core.simulation import InputSignal, TruthRecord, make_truth
from ..estimators import AugmentedModel, EstimateRecord, estimator_registry
from .artifacts import MANIFEST, ArtifactStore
from .config import RunConfig, config_hash, config_to_json, estimator_variants

MODEL_DOCUMENT = "model.json"


@dataclass(frozen=True)
class PipelineResult:
    """Outcome of a pipeline invocation."""
    run_dir: Path
    exit_code: int
    failed_stage: Optional[str] = None


class ExperimentPipeline:
    """
    Runs the assemble -> reduce -> simulate -> estimate -> metrics chain for one config.

    Stages can also be driven individually (``reduce`` and ``simulate`` CLI verbs).
    """

    def __init__(self, config: RunConfig, model_path: Optional[Path] = None, progress: bool = False,
                 export_matrices: bool = False):
        self.logger = logging.getLogger(__name__)
        self.config = config
        self.config_hash = config_hash(config)
        self.model_path = Path(model_path) if model_path else None
        self.progress = progress
        self.export_matrices = export_matrices
        run_name = config.output.run_name or f"run_{self.config_hash[:12]}"
        self.store = ArtifactStore(config.output.directory, run_name)

        self.stage_times: Dict[str, float] = {}
        self.started_at: Optional[str] = None
        self.full_model: Optional[FullOrderModel] = None
        self.reduced: Optional[ReducedModel] = None
        self.discrete: Optional[DiscreteModel] = None
        self.truth: Optional[TruthRecord] = None
        self.estimates: Dict[str, List[EstimateRecord]] = {}
        self.metrics: Dict[str, Tuple[MetricSeries, MetricSummary]] = {}
        self.unconverged: Dict[str, int] = {}

        self.logger.info(f"Pipeline initialized: run directory {self.store.run_dir}")

    @property
    def run_dir(self) -> Path:
        return self.store.run_dir

    @contextmanager
    def _stage(self, name: str):
        self.logger.info(f"Stage '{name}' started")
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except LaserFlowError as e:
            raise StageError(name, e) from e
        except Exception as e:
            self.logger.exception(f"Unexpected error in stage '{name}'")
            raise StageError(name, e) from e
        finally:
            self.stage_times[name] = time.perf_counter() - start
        self.logger.info(f"Stage '{name}' finished in {self.stage_times[name]:.3f}s")

    # Stages

    def assemble(self) -> FullOrderModel:
        with self._stage("assemble"):
            block = self.config.reduction
            self.full_model = build_full_order_model(
                self.config.build_geometry(), self.config.grid_settings(), k_b=block.k_b, k_c=block.k_c
            )
            if self.export_matrices:
                export_matrix_market(self.full_model, self.run_dir / "matrices")
        return self.full_model

    def reduce(self) -> Tuple[ReducedModel, DiscreteModel]:
        with self._stage("reduce"):
            if self.model_path is not None:
                self.reduced, self.discrete, _ = load_models(self.model_path)
                self._check_model_compatibility()
            else:
                self._reduce_from_full_model()
            save_models(self.store.path_for(MODEL_DOCUMENT), self.reduced, self.discrete, self._model_metadata())
        return self.reduced, self.discrete

    def _reduce_from_full_model(self) -> None:
        if self.full_model is None:
            raise ModelFormatError("Full-order model must be assembled before reduction")
        block = self.config.reduction
        system = build_augmented_system(self.full_model, self.config.domain())
        self.reduced = reduce(
            system,
            block.order,
            method=block.method,
            max_iterations=block.max_iterations,
            tolerance=block.tolerance,
            fallback=block.fallback,
            state_output_ratio=block.state_output_ratio,
            dc_interpolation=block.dc_interpolation,
            dc_tolerance=block.dc_tolerance,
        )
        self.discrete = discretize_zoh(self.reduced, block.sample_time)
        self.logger.info(f"Reduced model: order {self.reduced.order} ({self.reduced.method})")

    def _check_model_compatibility(self) -> None:
        block = self.config.reduction
        if abs(self.discrete.sample_time - block.sample_time) > 1e-12:
            raise ModelFormatError(
                f"Model sampled at {self.discrete.sample_time} s, config requests {block.sample_time} s"
            )
        if self.full_model is not None and self.reduced.V.shape[0] != self.full_model.n_f:
            raise ModelFormatError(
                f"Model bases have {self.reduced.V.shape[0]} rows but the grid has {self.full_model.n_f} unknowns"
            )

    def _model_metadata(self) -> dict:
        metadata = {"config_hash": self.config_hash, "code_version": __version__}
        if self.full_model is not None and self.reduced is not None and self.reduced.V.shape[0] == self.full_model.n_f:
            metadata["dc_gain_error"] = dc_gain_error(self.full_model, self.reduced, 0.0, 0.03)
            metadata["full_order"] = self.full_model.n_f
        return metadata

    def simulate(self) -> TruthRecord:
        with self._stage("simulate"):
            block = self.config.simulation
            signal = InputSignal.constant(block.power, block.t_final, self.discrete.sample_time)
            if block.truth_source == "full":
                if self.full_model is None:
                    raise ModelFormatError("Full-order truth requires the assembled model")
                source = self.full_model
            else:
                source = self.discrete
            self.truth = make_truth(
                source,
                block.alpha_true,
                signal,
                noise_variance=block.noise_variance,
                seed=block.seed,
                generator=block.generator,
                projection=self.reduced,
                substeps=block.substeps,
                method=block.integrator,
                progress=self.progress,
                domain=self.config.domain(),
            )
            self._write_truth()
        return self.truth

    def estimate(self) -> Dict[str, List[EstimateRecord]]:
        with self._stage("estimate"):
            model = AugmentedModel(self.discrete, self.config.reduction.state_output_ratio)
            for name, kind, settings in estimator_variants(self.config):
                estimator = estimator_registry.create(kind, name, model, settings)
                estimator.reset()
                records = []
                for k in tqdm(range(self.truth.steps), desc=name, disable=not self.progress, leave=False):
                    u_prev = None if k == 0 else float(self.truth.inputs[k - 1])
                    records.append(estimator.step(u_prev, self.truth.y_meas[k]))
                self.estimates[name] = records
                self.unconverged[name] = sum(not record.converged for record in records)
                self.logger.info(
                    f"{name}: final alpha {records[-1].alpha:.4f} (true {self.truth.alpha_true}), "
                    f"mean step {1e3 * np.mean([r.wall_time for r in records]):.3f} ms"
                )
        return self.estimates

    def evaluate(self) -> Dict[str, Tuple[MetricSeries, MetricSummary]]:
        with self._stage("metrics"):
            block = self.config.metrics
            for name, records in self.estimates.items():
                alpha_hat = np.array([record.alpha for record in records])
                series = compute_metrics(
                    self.truth.times,
                    self.truth.states,
                    self.truth.alpha_true,
                    self.truth.y_vol,
                    self.truth.y_meas,
                    np.array([record.x for record in records]),
                    alpha_hat,
                    state_scale=self.config.reduction.state_output_ratio,
                )
                summary = summarize(series, alpha_hat, self.truth.alpha_true, block.alpha_tolerance, block.settle_time)
                self.metrics[name] = (series, summary)
                self.logger.info(
                    f"{name}: convergence time {summary.convergence_time:.3f}s, "
                    f"overshoot {summary.overshoot:.4f}, steady e_x {summary.steady_state_error:.3e}"
                )
        return self.metrics

    def persist(self) -> None:
        with self._stage("persist"):
            self._write_estimates()
            self._write_metrics()
            self._write_timing()

    # Artifact writers

    def _write_truth(self) -> None:
        truth = self.truth
        self.store.write_csv(
            "run.csv",
            ["t", "u", "y_vol", "y_peak", "y_meas"],
            [truth.times, truth.inputs, truth.y_vol, truth.y_peak, truth.y_meas],
        )
        if truth.states is not None and self.config.output.write_states:
            header = ["t"] + [f"x_{i + 1}" for i in range(truth.states.shape[1])]
            self.store.write_csv("truth_states.csv", header, [truth.times] + list(truth.states.T))

    def _write_estimates(self) -> None:
        truth = self.truth
        header = ["t", "u", "y_vol", "y_peak", "y_meas"]
        columns = [truth.times, truth.inputs, truth.y_vol, truth.y_peak, truth.y_meas]
        for name, records in self.estimates.items():
            header += [f"{name}_alpha", f"{name}_y_hat"]
            columns += [[r.alpha for r in records], [r.y_vol for r in records]]

            states = np.array([r.x for r in records])
            self.store.write_csv(
                f"{name}.csv",
                ["t"] + [f"x_{i + 1}" for i in range(states.shape[1])]
                + ["alpha", "y_vol", "y_peak", "innovation", "cost", "iterations", "converged"],
                [truth.times] + list(states.T) + [
                    [r.alpha for r in records],
                    [r.y_vol for r in records],
                    [r.y_peak for r in records],
                    [r.innovation for r in records],
                    [r.cost for r in records],
                    [r.iterations for r in records],
                    [r.converged for r in records],
                ],
            )
        self.store.write_csv("run.csv", header, columns)

    def _write_metrics(self) -> None:
        header = ["t", "d_n"]
        columns = [self.truth.times, self._relative_noise()]
        rows = []
        for name, (series, summary) in self.metrics.items():
            header += [f"{name}_e_x", f"{name}_alpha_error"]
            columns += [series.state_error, series.alpha_error]
            rows.append([
                name,
                summary.convergence_time,
                summary.overshoot,
                summary.steady_state_error,
                summary.final_alpha_error,
                self.unconverged.get(name, 0),
            ])
        self.store.write_csv("metrics.csv", header, columns)
        self.store.write_rows(
            "summary.csv",
            ["estimator", "convergence_time", "overshoot", "steady_e_x", "final_alpha_error", "unconverged_steps"],
            rows,
        )

    def _relative_noise(self) -> np.ndarray:
        if self.metrics:
            return next(iter(self.metrics.values()))[0].relative_noise
        return relative_noise(self.truth.y_vol, self.truth.y_meas)

    def _write_timing(self) -> None:
        if not self.estimates:
            return
        names = list(self.estimates)
        self.store.write_csv(
            "timing.csv",
            ["t"] + [f"{name}_wall_ms" for name in names],
            [self.truth.times] + [[1e3 * r.wall_time for r in self.estimates[name]] for name in names],
        )
        rows = []
        for name in names:
            wall = 1e3 * np.array([r.wall_time for r in self.estimates[name]])
            rows.append([name, float(np.mean(wall)), float(np.percentile(wall, 95)), float(np.max(wall))])
        self.store.write_rows("timing_summary.csv", ["estimator", "mean_ms", "p95_ms", "max_ms"], rows)

    def _write_manifest(self, status: str) -> None:
        self.store.write_json(MANIFEST, {
            "status": status,
            "config": self.config.model_dump(mode="json"),
            "config_hash": self.config_hash,
            "code_version": __version__,
            "started_at": self.started_at,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "stage_times": self.stage_times,
            "files": self.store.inventory(),
        })

    # Entry points

    def _execute(self, stages) -> PipelineResult:
        self.started_at = datetime.now(timezone.utc).isoformat()
        self.store.clear_failure()
        self.store.write_text("config.json", config_to_json(self.config) + "\n")
        try:
            for stage in stages:
                stage()
        except StageError as e:
            self.store.mark_failed(e.to_record())
            self._write_manifest("failed")
            return PipelineResult(self.run_dir, 1, e.stage)
        self._write_manifest("ok")
        self.logger.info(f"Run finished: {self.run_dir}")
        return PipelineResult(self.run_dir, 0)

    def run(self) -> PipelineResult:
        """Full experiment: assemble, reduce, simulate, estimate, metrics, persist."""
        stages = [self.reduce, self.simulate, self.estimate, self.evaluate, self.persist]
        if self.model_path is None or self.config.simulation.truth_source == "full":
            stages.insert(0, self.assemble)
        return self._execute(stages)

    def run_reduction(self) -> PipelineResult:
        """Assemble and reduce only; writes the model document."""
        return self._execute([self.assemble, self.reduce])

    def run_simulation(self) -> PipelineResult:
        """Truth stream only, from a cached model document when given."""
        stages = [self.reduce, self.simulate]
        if self.model_path is None or self.config.simulation.truth_source == "full":
            stages.insert(0, self.assemble)
        return self._execute(stages)
