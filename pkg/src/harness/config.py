"""
Run configuration
=================

Schema-validated experiment configuration. A config is a JSON document
with ``schema_version`` and one block per pipeline stage; every field has
a default, unknown keys are rejected and models are immutable.

Environment:
    LASERFLOW_OUTPUT_ROOT  overrides ``output.directory``
    LASERFLOW_LOG_LEVEL    default log level of the CLI
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.errors import ConfigError
from ..core.fundus_model import (
    DEFAULT_LAYERS,
    DEFAULT_NODES_PER_LAYER,
    FundusGeometry,
    GridSettings,
    Layer,
    LayerStack,
    MaterialConstants,
)
from ..core.model_reduction import ParamDomain

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "LASERFLOW_OUTPUT_ROOT"
LOG_LEVEL_ENV = "LASERFLOW_LOG_LEVEL"


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LayerConfig(_Block):
    name: str
    thickness: float = Field(gt=0)
    absorption: float = Field(ge=0)


class GeometryConfig(_Block):
    spot_radius: float = Field(1e-4, gt=0)
    outer_radius: float = Field(1e-3, gt=0)
    z_begin: float = 0.0
    layers: Tuple[LayerConfig, ...] = tuple(
        LayerConfig(name=layer.name, thickness=layer.thickness, absorption=layer.absorption)
        for layer in DEFAULT_LAYERS
    )
    peak_layer: str = "rpe"
    density: float = Field(993.0, gt=0)
    heat_capacity: float = Field(4176.0, gt=0)
    conductivity: float = Field(0.627, gt=0)

    @model_validator(mode="after")
    def _check_radii(self) -> "GeometryConfig":
        if self.outer_radius <= self.spot_radius:
            raise ValueError("outer_radius must exceed spot_radius")
        if self.peak_layer not in [layer.name for layer in self.layers]:
            raise ValueError(f"peak_layer '{self.peak_layer}' is not one of the layers")
        return self


class GridConfig(_Block):
    n_radial: int = Field(40, ge=8)
    n_inner: int = Field(10, ge=1)
    nodes_per_layer: Tuple[int, ...] = DEFAULT_NODES_PER_LAYER
    radial_spacing: Literal["graded", "uniform"] = "graded"


class ReductionConfig(_Block):
    order: int = Field(3, ge=1)
    k_b: int = Field(8, ge=0)
    k_c: int = Field(8, ge=0)
    alpha_min: float = -0.5
    alpha_max: float = 0.5
    method: Literal["irka", "balanced_truncation"] = "irka"
    max_iterations: int = Field(100, ge=1)
    tolerance: float = Field(1e-6, gt=0)
    fallback: bool = True
    state_output_ratio: float = Field(1e-8, gt=0)
    dc_interpolation: bool = True
    dc_tolerance: float = Field(1e-2, gt=0)
    sample_time: float = Field(1.0 / 250.0, gt=0)

    @model_validator(mode="after")
    def _check_domain(self) -> "ReductionConfig":
        if not self.alpha_min <= 0.0 <= self.alpha_max or self.alpha_min == self.alpha_max:
            raise ValueError("parameter domain must be a non-empty interval containing 0")
        return self


class SimulationConfig(_Block):
    alpha_true: float = 0.2
    power: float = Field(0.03, ge=0)
    t_final: float = Field(2.0, gt=0)
    noise_variance: float = Field(1.0, ge=0)
    seed: int = Field(0, ge=0)
    generator: Literal["philox", "pcg64", "sfc64"] = "philox"
    truth_source: Literal["full", "reduced"] = "full"
    substeps: int = Field(10, ge=1)
    integrator: Literal["crank_nicolson", "implicit_euler"] = "crank_nicolson"


class EkfConfig(_Block):
    enabled: bool = True
    q_state: float = Field(1e-3, gt=0)
    q_alpha: float = Field(0.15, gt=0)
    r: float = Field(1e2, gt=0)
    r_sweep: Tuple[float, ...] = ()
    freeze_alpha_without_input: bool = True

    @field_validator("r_sweep")
    @classmethod
    def _positive_sweep(cls, values: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(value <= 0 for value in values):
            raise ValueError("r_sweep values must be positive")
        return values


class MheConfig(_Block):
    enabled: bool = True
    q_state: float = Field(1e-3, gt=0)
    q_alpha: float = Field(0.15, gt=0)
    p_state: Optional[float] = Field(None, gt=0)  # None: P = Q
    p_alpha: Optional[float] = Field(None, gt=0)
    r: float = Field(1e2, gt=0)
    horizon: int = Field(5, ge=0)
    horizon_sweep: Tuple[int, ...] = ()
    r_sweep: Tuple[float, ...] = ()
    max_iterations: int = Field(50, ge=1)
    step_tolerance: float = Field(1e-9, gt=0)
    gradient_tolerance: float = Field(1e-6, gt=0)


class MetricsConfig(_Block):
    alpha_tolerance: float = Field(0.05, gt=0)
    settle_time: float = Field(0.5, ge=0)


class OutputConfig(_Block):
    directory: str = "runs"
    run_name: Optional[str] = None
    write_states: bool = True


class RunConfig(_Block):
    """Complete experiment configuration."""
    schema_version: Literal[1] = SCHEMA_VERSION
    geometry: GeometryConfig = GeometryConfig()
    grid: GridConfig = GridConfig()
    reduction: ReductionConfig = ReductionConfig()
    simulation: SimulationConfig = SimulationConfig()
    ekf: EkfConfig = EkfConfig()
    mhe: MheConfig = MheConfig()
    metrics: MetricsConfig = MetricsConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        if len(self.grid.nodes_per_layer) != len(self.geometry.layers):
            raise ValueError(
                f"grid.nodes_per_layer has {len(self.grid.nodes_per_layer)} entries "
                f"for {len(self.geometry.layers)} layers"
            )
        if not self.reduction.alpha_min <= self.simulation.alpha_true <= self.reduction.alpha_max:
            raise ValueError("simulation.alpha_true must lie in the parameter domain")
        return self

    def build_geometry(self) -> FundusGeometry:
        block = self.geometry
        return FundusGeometry(
            spot_radius=block.spot_radius,
            outer_radius=block.outer_radius,
            z_begin=block.z_begin,
            layers=LayerStack(tuple(Layer(l.name, l.thickness, l.absorption) for l in block.layers)),
            materials=MaterialConstants(block.density, block.heat_capacity, block.conductivity),
            peak_layer=block.peak_layer,
        )

    def grid_settings(self) -> GridSettings:
        return GridSettings(
            n_radial=self.grid.n_radial,
            n_inner=self.grid.n_inner,
            nodes_per_layer=tuple(self.grid.nodes_per_layer),
            radial_spacing=self.grid.radial_spacing,
        )

    def domain(self) -> ParamDomain:
        return ParamDomain(self.reduction.alpha_min, self.reduction.alpha_max)


def config_to_json(config: RunConfig) -> str:
    """Canonical JSON text (sorted keys, compact) of a config."""
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON text."""
    return hashlib.sha256(config_to_json(config).encode("utf-8")).hexdigest()


def parse_config(data: Union[dict, str]) -> RunConfig:
    """Validate a config mapping or JSON text."""
    try:
        if isinstance(data, str):
            return RunConfig.model_validate_json(data)
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid run configuration: {e}")


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Load and validate a JSON run configuration.

    Raises:
        ConfigError: If the file is unreadable or violates the schema
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must contain a JSON object")
    if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(
            f"Unsupported schema_version {data.get('schema_version')} in {path} (expected {SCHEMA_VERSION})"
        )
    config = parse_config(data)
    logger.info(f"Loaded config {path} (hash {config_hash(config)[:12]})")
    return config


def apply_environment(config: RunConfig) -> RunConfig:
    """Apply ``LASERFLOW_OUTPUT_ROOT`` to the output block."""
    output_root = os.getenv(OUTPUT_ROOT_ENV)
    if not output_root:
        return config
    logger.info(f"Output root overridden by {OUTPUT_ROOT_ENV}: {output_root}")
    return config.model_copy(update={"output": config.output.model_copy(update={"directory": output_root})})


def estimator_variants(config: RunConfig) -> List[Tuple[str, str, dict]]:
    """
    Estimator instances requested by the config as (name, kind, settings).

    Sweeps add variants named ``ekf_R1000`` or ``mhe_N10``.
    """
    variants = []
    if config.ekf.enabled:
        base = {
            "q_state": config.ekf.q_state,
            "q_alpha": config.ekf.q_alpha,
            "R": config.ekf.r,
            "freeze_alpha_without_input": config.ekf.freeze_alpha_without_input,
        }
        variants.append(("ekf", "ekf", base))
        for r in config.ekf.r_sweep:
            variants.append((f"ekf_R{r:g}", "ekf", {**base, "R": r}))
    if config.mhe.enabled:
        block = config.mhe
        base = {
            "q_state": block.q_state,
            "q_alpha": block.q_alpha,
            "R": block.r,
            "horizon": block.horizon,
            "max_iterations": block.max_iterations,
            "step_tolerance": block.step_tolerance,
            "gradient_tolerance": block.gradient_tolerance,
        }
        if block.p_state is not None or block.p_alpha is not None:
            base["p_state"] = block.p_state if block.p_state is not None else block.q_state
            base["p_alpha"] = block.p_alpha if block.p_alpha is not None else block.q_alpha
        variants.append(("mhe", "mhe", base))
        for horizon in block.horizon_sweep:
            variants.append((f"mhe_N{horizon}", "mhe", {**base, "horizon": horizon}))
        for r in block.r_sweep:
            variants.append((f"mhe_R{r:g}", "mhe", {**base, "R": r}))
    names = [name for name, _, _ in variants]
    if len(set(names)) != len(names):
        raise ConfigError(f"Duplicate estimator variant names: {names}")
    return variants
