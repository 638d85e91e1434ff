"""
Time-domain simulation
======================

Deterministic simulation of the full-order and the sampled reduced model,
and generation of noisy synthetic measurements for estimator benchmarks.

Conventions: the state starts at zero, the input sample u_k is held on
[t_k, t_{k+1}) and the outputs y_k are taken at t_k = k * T_s.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from tqdm import tqdm

from .discrete_model import DEFAULT_SAMPLE_TIME, DiscreteModel
from .errors import SimulationError
from .fundus_model import FullOrderModel
from .model_reduction import ParamDomain, ReducedModel

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6  # K
SUPPORTED_GENERATORS = ("philox", "pcg64", "sfc64")


@dataclass(frozen=True, eq=False)
class InputSignal:
    """Piecewise-constant laser power samples (W) at period ``sample_time``."""
    samples: np.ndarray
    sample_time: float = DEFAULT_SAMPLE_TIME

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or len(samples) == 0:
            raise SimulationError("Input signal needs a non-empty 1-D sample array")
        if np.any(samples < 0) or not np.all(np.isfinite(samples)):
            raise SimulationError("Laser power must be finite and non-negative")
        if not self.sample_time > 0:
            raise SimulationError(f"Sample time must be positive, got {self.sample_time}")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def constant(cls, power: float, duration: float,
                 sample_time: float = DEFAULT_SAMPLE_TIME) -> "InputSignal":
        """Constant power over ``duration`` seconds (rounded to whole samples)."""
        steps = int(round(duration / sample_time))
        if steps < 1:
            raise SimulationError(f"Duration {duration} s is shorter than one sample")
        return cls(np.full(steps, float(power)), sample_time)

    @classmethod
    def switched(cls, power: float, duration: float, on_time: float, off_time: Optional[float] = None,
                 sample_time: float = DEFAULT_SAMPLE_TIME) -> "InputSignal":
        """Power ``power`` on [on_time, off_time), zero elsewhere."""
        signal = cls.constant(0.0, duration, sample_time)
        times = signal.times
        off_time = duration if off_time is None else off_time
        samples = np.where((times >= on_time - 1e-12) & (times < off_time - 1e-12), float(power), 0.0)
        return cls(samples, sample_time)

    @property
    def steps(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps) * self.sample_time

    def scaled(self, factor: float) -> "InputSignal":
        return InputSignal(self.samples * factor, self.sample_time)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Simulated outputs at the sample instants, optionally with states."""
    times: np.ndarray
    inputs: np.ndarray
    y_vol: np.ndarray
    y_peak: np.ndarray
    states: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class TruthRecord:
    """
    Synthetic truth stream for estimator benchmarks.

    ``states`` are reduced coordinates of the true state (projected when the
    truth comes from the full-order model).
    """
    times: np.ndarray
    inputs: np.ndarray
    y_vol: np.ndarray
    y_peak: np.ndarray
    y_meas: np.ndarray
    states: Optional[np.ndarray]
    alpha_true: float
    noise_variance: float
    seed: int
    generator: str
    source: str

    @property
    def noise(self) -> np.ndarray:
        return self.y_meas - self.y_vol

    @property
    def steps(self) -> int:
        return len(self.times)


def make_rng(seed: int, generator: str = "philox") -> np.random.Generator:
    """Seeded numpy generator from a named bit generator."""
    bit_generators = {
        "philox": np.random.Philox,
        "pcg64": np.random.PCG64,
        "sfc64": np.random.SFC64,
    }
    if generator not in bit_generators:
        raise SimulationError(f"Unknown generator '{generator}', choose from {SUPPORTED_GENERATORS}")
    return np.random.Generator(bit_generators[generator](seed))


def _check_divergence(x: np.ndarray, k: int) -> None:
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
        raise SimulationError(f"Simulation diverged at sample {k}: |x| exceeds {DIVERGENCE_LIMIT:g} K")


def _check_parameter(alpha: float, domain: ParamDomain) -> None:
    if not alpha > -1.0:
        raise SimulationError(f"Absorption prefactor must exceed -1, got {alpha}")
    if not domain.contains(alpha):
        raise SimulationError(
            f"alpha = {alpha} outside parameter domain [{domain.alpha_min}, {domain.alpha_max}]"
        )


def simulate_full(model: FullOrderModel, alpha: float, signal: InputSignal, substeps: int = 10,
                  method: str = "crank_nicolson", store_states: bool = False,
                  progress: bool = False, domain: Optional[ParamDomain] = None) -> Trajectory:
    """
    Integrate the full-order model with a sparse implicit scheme.

    Crank-Nicolson steps are started with two implicit-Euler half steps after
    every input jump; both schemes share one LU factorization.

    Args:
        model: Full-order model
        alpha: True absorption prefactor (in ``domain``)
        signal: Piecewise-constant input
        substeps: Integrator steps per sample interval (>= 1)
        method: "crank_nicolson" or "implicit_euler"
        store_states: Keep the full state at every sample
        progress: Show a progress bar
        domain: Admissible parameter interval (default [-0.5, 0.5])

    Returns:
        Trajectory with outputs C(alpha) x at every sample instant

    Raises:
        SimulationError: On invalid arguments or divergence
    """
    _check_parameter(alpha, ParamDomain() if domain is None else domain)
    if substeps < 1:
        raise SimulationError(f"Need at least one substep per sample, got {substeps}")
    if method not in ("crank_nicolson", "implicit_euler"):
        raise SimulationError(f"Unknown integrator '{method}'")

    dt = signal.sample_time / substeps
    identity = sp.identity(model.n_f, format="csc")
    A = model.A.tocsc()
    b = model.b(alpha)
    C = model.C(alpha)

    if method == "crank_nicolson":
        lu = sla.splu((identity - 0.5 * dt * A).tocsc())
        explicit = (identity + 0.5 * dt * A).tocsr()
    else:
        lu = sla.splu((identity - dt * A).tocsc())
        explicit = None

    steps = signal.steps
    x = np.zeros(model.n_f)
    outputs = np.zeros((steps, 2))
    states = np.zeros((steps, model.n_f)) if store_states else None
    previous_power = 0.0

    for k in tqdm(range(steps), desc="full-order simulation", disable=not progress, leave=False):
        outputs[k] = C @ x
        if store_states:
            states[k] = x
        if k == steps - 1:
            break
        power = signal.samples[k]
        forcing = b * power
        for substep in range(substeps):
            if method == "implicit_euler":
                x = lu.solve(x + dt * forcing)
            elif substep == 0 and power != previous_power:
                for _ in range(2):
                    x = lu.solve(x + 0.5 * dt * forcing)
            else:
                x = lu.solve(explicit @ x + dt * forcing)
        previous_power = power
        _check_divergence(x, k + 1)

    logger.debug(f"Full-order simulation: {steps} samples, {substeps} substeps, {method}")
    return Trajectory(
        times=signal.times,
        inputs=signal.samples.copy(),
        y_vol=outputs[:, 0],
        y_peak=outputs[:, 1],
        states=states,
    )


def simulate_reduced(model: DiscreteModel, alpha: float, signal: InputSignal,
                     x0: Optional[np.ndarray] = None) -> Trajectory:
    """
    Run the exact sampled recursion x_{k+1} = A_d x_k + b_d(alpha) u_k.

    Returns:
        Trajectory with reduced states at every sample
    """
    if abs(signal.sample_time - model.sample_time) > 1e-12 * model.sample_time:
        raise SimulationError(
            f"Input sampled at {signal.sample_time} s but model at {model.sample_time} s"
        )
    b = model.b(alpha)
    c_vol = model.c_vol(alpha)
    x = np.zeros(model.order) if x0 is None else np.asarray(x0, dtype=float).copy()
    states = np.zeros((signal.steps, model.order))
    for k in range(signal.steps):
        states[k] = x
        x = model.A @ x + b * signal.samples[k]
    return Trajectory(
        times=signal.times,
        inputs=signal.samples.copy(),
        y_vol=states @ c_vol,
        y_peak=states @ model.c_peak,
        states=states,
    )


def make_truth(model: Union[DiscreteModel, FullOrderModel], alpha: float, signal: InputSignal,
               noise_variance: float = 1.0, seed: int = 0, generator: str = "philox",
               projection: Optional[ReducedModel] = None, substeps: int = 10,
               method: str = "crank_nicolson", progress: bool = False,
               domain: Optional[ParamDomain] = None) -> TruthRecord:
    """
    Simulate the true system and add Gaussian measurement noise to the volume output.

    Args:
        model: Reduced discrete model (no model mismatch) or full-order model
        alpha: True absorption prefactor
        signal: Input signal
        noise_variance: Noise variance sigma^2 in K^2 (>= 0)
        seed: Seed of the noise generator
        generator: Bit generator name ("philox", "pcg64", "sfc64")
        projection: Reduced model used to express full-order states in reduced coordinates
        substeps: Full-order integrator substeps per sample
        method: Full-order integrator
        progress: Show a progress bar for full-order runs
        domain: Parameter interval for full-order truth (default: that of ``projection``,
            else [-0.5, 0.5])

    Returns:
        TruthRecord
    """
    if noise_variance < 0:
        raise SimulationError(f"Noise variance must be non-negative, got {noise_variance}")
    rng = make_rng(seed, generator)

    if isinstance(model, DiscreteModel):
        _check_parameter(alpha, model.domain)
        trajectory = simulate_reduced(model, alpha, signal)
        states = trajectory.states
        source = "reduced"
    else:
        if domain is None and projection is not None:
            domain = projection.domain
        store = projection is not None
        trajectory = simulate_full(model, alpha, signal, substeps=substeps, method=method,
                                   store_states=store, progress=progress, domain=domain)
        states = projection.project_state(trajectory.states) if store else None
        source = "full"

    noise = rng.standard_normal(signal.steps) * np.sqrt(noise_variance)
    logger.info(
        f"Truth stream ({source}): {signal.steps} samples, alpha = {alpha}, "
        f"sigma^2 = {noise_variance}, seed = {seed} ({generator})"
    )
    return TruthRecord(
        times=trajectory.times,
        inputs=trajectory.inputs,
        y_vol=trajectory.y_vol,
        y_peak=trajectory.y_peak,
        y_meas=trajectory.y_vol + noise,
        states=states,
        alpha_true=float(alpha),
        noise_variance=float(noise_variance),
        seed=int(seed),
        generator=generator,
        source=source,
    )
