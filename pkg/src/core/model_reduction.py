"""
Parametric Model Order Reduction
================================

Reduces the full-order fundus model while keeping its polynomial
dependence on the absorption prefactor alpha.

The Taylor coefficients of input and output are weighted with the
L2 moment matrices of the parameter domain, which turns the parametric
problem into a parameter-independent MIMO system. That system is reduced
with tangential IRKA (balanced truncation as fallback) and the resulting
bases are applied to every Taylor coefficient.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .errors import ReductionError
from .fundus_model import FullOrderModel
from .taylor import taylor_sum

logger = logging.getLogger(__name__)

MAX_PROJECTION_CONDITION = 1e6


@dataclass(frozen=True)
class ParamDomain:
    """Closed parameter interval containing the Taylor center alpha = 0."""
    alpha_min: float = -0.5
    alpha_max: float = 0.5

    def __post_init__(self):
        if not self.alpha_min < self.alpha_max:
            raise ReductionError(
                f"Empty parameter domain [{self.alpha_min}, {self.alpha_max}]"
            )
        if not self.alpha_min <= 0.0 <= self.alpha_max:
            raise ReductionError(
                f"Parameter domain [{self.alpha_min}, {self.alpha_max}] must contain 0"
            )

    @property
    def length(self) -> float:
        return self.alpha_max - self.alpha_min

    def contains(self, alpha: float) -> bool:
        return self.alpha_min <= alpha <= self.alpha_max

    def clip(self, alpha):
        return np.clip(alpha, self.alpha_min, self.alpha_max)

    def quadrature(self, n_points: int) -> Tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre nodes and weights on the domain."""
        nodes, weights = np.polynomial.legendre.leggauss(n_points)
        half = 0.5 * self.length
        return self.alpha_min + half * (nodes + 1.0), half * weights


def moment_matrix(domain: ParamDomain, max_order: int) -> np.ndarray:
    """
    Monomial moments ``M[i, j] = int_D alpha**(i + j) d alpha`` in closed form.

    Args:
        domain: Parameter interval
        max_order: Highest monomial order (>= 0)

    Returns:
        Symmetric positive semidefinite matrix of shape (max_order + 1, max_order + 1)
    """
    if max_order < 0:
        raise ReductionError(f"Moment order must be non-negative, got {max_order}")
    powers = np.add.outer(np.arange(max_order + 1), np.arange(max_order + 1)) + 1
    a, b = float(domain.alpha_min), float(domain.alpha_max)
    return (b ** powers - a ** powers) / powers


def moment_factor(moments: np.ndarray, threshold: float = 1e-12) -> np.ndarray:
    """
    Factor ``L`` with ``L @ L.T == moments`` from the symmetric eigendecomposition.

    Directions with eigenvalue below ``threshold * lambda_max`` are dropped,
    so ``L`` may have fewer columns than ``moments``.
    """
    eigenvalues, eigenvectors = la.eigh(moments)
    keep = eigenvalues > threshold * eigenvalues.max()
    if not np.any(keep):
        raise ReductionError("Moment matrix is numerically zero")
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        logger.info(f"Moment factorization dropped {dropped} null direction(s)")
    return eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    """
    Parameter-independent MIMO system whose H2 norm is the L2(D) x H2 norm
    of the parametric transfer function.

    ``B`` has one column per retained input moment direction; ``C`` stacks
    the moment-weighted volume rows followed by the peak row.
    """
    A: sp.csr_matrix
    B: np.ndarray
    C: np.ndarray
    model: FullOrderModel
    domain: ParamDomain
    input_factor: np.ndarray
    output_factor: np.ndarray

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]


def build_augmented_system(model: FullOrderModel, domain: ParamDomain) -> AugmentedSystem:
    """
    Build the augmented system (A, B~, C~) from Taylor coefficients and moments.

    Args:
        model: Full-order parametric model
        domain: Parameter domain D

    Returns:
        AugmentedSystem
    """
    input_factor = moment_factor(moment_matrix(domain, model.k_b))
    output_factor = moment_factor(moment_matrix(domain, model.k_c))

    B = model.b_taylor.T @ input_factor
    volume_rows = output_factor.T @ model.c_taylor[:, 0, :]
    peak_row = math.sqrt(domain.length) * model.c_taylor[0, 1, :]
    C = np.vstack((volume_rows, peak_row))

    logger.info(
        f"Augmented system: {B.shape[1]} input column(s), {C.shape[0]} output row(s) "
        f"from k_B = {model.k_b}, k_C = {model.k_c}"
    )
    return AugmentedSystem(
        A=model.A,
        B=B,
        C=C,
        model=model,
        domain=domain,
        input_factor=input_factor,
        output_factor=output_factor,
    )


def h2_norm(A, B: np.ndarray, C: np.ndarray) -> float:
    """H2 norm of a stable LTI system from the dense controllability Gramian."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    B = np.atleast_2d(np.asarray(B, dtype=float).T).T
    C = np.atleast_2d(C)
    gramian = la.solve_continuous_lyapunov(A, -B @ B.T)
    return math.sqrt(max(float(np.trace(C @ gramian @ C.T)), 0.0))


def parametric_h2_norm(A, b_taylor: np.ndarray, c_taylor: np.ndarray,
                       domain: ParamDomain, n_points: int = 5) -> float:
    """
    Quadrature value of the L2(D) x H2 norm of ``C(alpha) (sI - A)^-1 b(alpha')``.

    Input and output parameters are integrated independently over D with a
    tensor Gauss-Legendre rule, as the augmented system does. This equals
    ``|D| * int_D ||H(., alpha)||^2 d alpha`` with one shared alpha only when
    the output is parameter-independent.
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    nodes, weights = domain.quadrature(n_points)
    outputs = [taylor_sum(c_taylor, alpha) for alpha in nodes]
    total = 0.0
    for alpha_in, weight_in in zip(nodes, weights):
        b = taylor_sum(b_taylor, alpha_in)[:, None]
        gramian = la.solve_continuous_lyapunov(A, -b @ b.T)
        for C, weight_out in zip(outputs, weights):
            C = np.atleast_2d(C)
            total += weight_in * weight_out * float(np.trace(C @ gramian @ C.T))
    return math.sqrt(max(total, 0.0))


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """
    Reduced parametric model  x_r' = A_r x_r + b_r(alpha) u,  y = C_r(alpha) x_r.

    ``b_taylor`` has shape (k_B + 1, n); ``c_taylor`` has shape (k_C + 1, 2, n).
    ``V`` and ``W`` are the right and left projection bases.
    """
    A: np.ndarray
    b_taylor: np.ndarray
    c_taylor: np.ndarray
    V: np.ndarray
    W: np.ndarray
    domain: ParamDomain
    method: str = "irka"
    iterations: int = 0
    converged: bool = True
    shifts: Tuple[complex, ...] = field(default_factory=tuple)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def k_b(self) -> int:
        return len(self.b_taylor) - 1

    @property
    def k_c(self) -> int:
        return len(self.c_taylor) - 1

    def b(self, alpha: float) -> np.ndarray:
        return taylor_sum(self.b_taylor, alpha)

    def C(self, alpha: float) -> np.ndarray:
        return taylor_sum(self.c_taylor, alpha)

    def is_hurwitz(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.A).real < 0))

    def projection_condition(self) -> float:
        return float(np.linalg.cond(self.W.T @ self.V))

    def project_state(self, x: np.ndarray) -> np.ndarray:
        """Oblique projection (W^T V)^-1 W^T x; accepts a state or rows of states."""
        x = np.asarray(x, dtype=float)
        coordinates = la.solve(self.W.T @ self.V, self.W.T @ np.atleast_2d(x).T)
        return coordinates.T[0] if x.ndim == 1 else coordinates.T

    def lift_state(self, x_r: np.ndarray) -> np.ndarray:
        return np.asarray(x_r) @ self.V.T

    def steady_state(self, alpha: float, power: float) -> np.ndarray:
        return -la.solve(self.A, self.b(alpha) * power)

    def verify_projection(self, model: FullOrderModel, rtol: float = 1e-10) -> None:
        """
        Assert the reconstruction identities, Hurwitz stability and conditioning.

        Raises:
            ReductionError: If any check fails
        """
        condition = self.projection_condition()
        if not condition < MAX_PROJECTION_CONDITION:
            raise ReductionError(
                f"W^T V is ill-conditioned (cond = {condition:.3e})",
                shifts=self.shifts, condition_number=condition,
            )
        gram = self.W.T @ self.V
        checks = {
            "A_r": (la.solve(gram, self.W.T @ (model.A @ self.V)), self.A),
            "b_r": (la.solve(gram, self.W.T @ model.b_taylor.T).T, self.b_taylor),
            "C_r": (model.c_taylor @ self.V, self.c_taylor),
        }
        for name, (expected, actual) in checks.items():
            gap = np.linalg.norm(expected - actual) / max(np.linalg.norm(expected), 1e-300)
            if gap > rtol:
                raise ReductionError(f"Projection identity for {name} violated (relative gap {gap:.3e})")
        if not self.is_hurwitz():
            raise ReductionError(
                "Reduced system matrix is not Hurwitz", shifts=self.shifts, condition_number=condition
            )


def _sorted_shifts(shifts: np.ndarray) -> np.ndarray:
    return np.sort_complex(np.asarray(shifts, dtype=complex))


def _tangential_basis(A: sp.csc_matrix, shifts: np.ndarray, directions: np.ndarray,
                      operator: np.ndarray, transpose: bool,
                      fixed: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Real basis spanning ``(sigma I - A)^-1 operator d`` (or the transposed solve).

    Complex shifts must come in conjugate pairs; each pair contributes the
    real and imaginary part of one solve. ``fixed`` columns are prepended
    unchanged.
    """
    identity = sp.identity(A.shape[0], format="csc")
    columns = [] if fixed is None else [fixed]
    for sigma, direction in zip(shifts, directions):
        if sigma.imag < -1e-12 * abs(sigma):
            continue
        rhs = operator @ direction
        if abs(sigma.imag) <= 1e-12 * abs(sigma):
            lu = sla.splu((sigma.real * identity - A).tocsc())
            columns.append(lu.solve(np.real(rhs), trans="T" if transpose else "N"))
        else:
            lu = sla.splu((sigma * identity - A.astype(complex)).tocsc())
            solution = lu.solve(rhs.astype(complex), trans="T" if transpose else "N")
            columns.extend((solution.real, solution.imag))
    basis, _ = np.linalg.qr(np.column_stack(columns))
    return basis


def _project(A, B: np.ndarray, C: np.ndarray, V: np.ndarray, W: np.ndarray):
    gram = W.T @ V
    return (la.solve(gram, W.T @ (A @ V)), la.solve(gram, W.T @ B), C @ V)


def _dc_columns(system: AugmentedSystem) -> Tuple[np.ndarray, np.ndarray]:
    """Steady-state solves A^-1 b_0 and A^-T c_vol,0^T of the nominal model."""
    lu = sla.splu(system.A.tocsc())
    model = system.model
    return lu.solve(model.b_taylor[0]), lu.solve(np.ascontiguousarray(model.c_taylor[0, 0]), trans="T")


def free_pole_indices(eigenvalues: np.ndarray, count: int) -> Optional[np.ndarray]:
    """
    Indices of the ``count`` reduced poles whose mirror images become free shifts.

    The slowest real poles are the ones left to the fixed interpolation point
    at s = 0. Returns None when no real pole is available to give up.
    """
    dropped = len(eigenvalues) - count
    if dropped == 0:
        return np.arange(len(eigenvalues))
    real = np.flatnonzero(np.abs(eigenvalues.imag) <= 1e-12 * np.abs(eigenvalues))
    if len(real) < dropped:
        return None
    slowest = real[np.argsort(np.abs(eigenvalues[real]))[:dropped]]
    return np.setdiff1d(np.arange(len(eigenvalues)), slowest)


def irka(system: AugmentedSystem, order: int, max_iterations: int = 100,
         tolerance: float = 1e-6, dc_interpolation: bool = True) -> Tuple[np.ndarray, np.ndarray, dict]:
    """
    Tangential IRKA on the augmented MIMO system.

    With ``dc_interpolation`` one interpolation point is pinned at s = 0:
    V contains A^-1 b_0 and W contains A^-T c_vol,0^T, so the reduced model
    reproduces the nominal steady state of both outputs exactly. The other
    ``order - 1`` shifts follow the usual IRKA update, mirroring all reduced
    poles except the slowest real one.

    Args:
        system: Augmented system
        order: Reduced order n
        max_iterations: Iteration limit
        tolerance: Relative shift change that counts as converged
        dc_interpolation: Pin one interpolation point at s = 0

    Returns:
        Tuple of (V, W, info) with info keys ``iterations``, ``converged``,
        ``shifts`` (the iterated shifts) and ``fixed_shifts``
    """
    A = system.A.tocsc()
    fixed_v = fixed_w = None
    n_free = order
    if dc_interpolation and order > 1:
        fixed_v, fixed_w = _dc_columns(system)
        n_free = order - 1
    shifts = np.logspace(0.0, 4.0, order)[order - n_free:].astype(complex)
    _, _, input_vectors = np.linalg.svd(system.B, full_matrices=False)
    output_vectors, _, _ = np.linalg.svd(system.C, full_matrices=False)
    b_directions = np.tile(input_vectors[0], (n_free, 1)).astype(complex)
    c_directions = np.tile(output_vectors[:, 0], (n_free, 1)).astype(complex)
    fixed_shifts = (0.0,) * (order - n_free)

    converged = False
    iteration = 0
    V = W = None
    for iteration in range(1, max_iterations + 1):
        V = _tangential_basis(A, shifts, b_directions, system.B, False, fixed_v)
        W = _tangential_basis(A, shifts, c_directions, system.C.T, True, fixed_w)
        if V.shape[1] != order or W.shape[1] != order:
            raise ReductionError(
                f"Tangential bases lost rank ({V.shape[1]}, {W.shape[1]} of {order})", shifts=shifts
            )
        A_r, B_r, C_r = _project(A, system.B, system.C, V, W)
        eigenvalues, eigenvectors = la.eig(A_r)
        free = free_pole_indices(eigenvalues, n_free)
        if free is None:
            logger.warning(f"IRKA iteration {iteration}: no real pole left for the s = 0 interpolation point")
            break

        new_shifts = -eigenvalues[free]
        unstable = new_shifts.real <= 0
        if np.any(unstable):
            logger.debug(f"IRKA iteration {iteration}: mirroring {int(unstable.sum())} unstable pole(s)")
            new_shifts = np.abs(new_shifts.real) + 1j * new_shifts.imag

        b_directions = la.solve(eigenvectors, B_r)[free]
        c_directions = (C_r @ eigenvectors).T[free]

        change = np.max(
            np.abs(_sorted_shifts(new_shifts) - _sorted_shifts(shifts)) / np.abs(_sorted_shifts(shifts))
        )
        logger.debug(f"IRKA iteration {iteration}: relative shift change {change:.3e}")
        shifts = new_shifts
        if change < tolerance:
            converged = True
            break

    if converged:
        # Final bases interpolate at the converged shifts
        V = _tangential_basis(A, shifts, b_directions, system.B, False, fixed_v)
        W = _tangential_basis(A, shifts, c_directions, system.C.T, True, fixed_w)
    return V, W, {
        "iterations": iteration,
        "converged": converged,
        "shifts": tuple(shifts),
        "fixed_shifts": fixed_shifts,
    }


def _psd_factor(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = la.eigh(0.5 * (matrix + matrix.T))
    keep = eigenvalues > 1e-14 * max(eigenvalues.max(), 0.0)
    return eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])


def balanced_truncation(system: AugmentedSystem, order: int) -> Tuple[np.ndarray, np.ndarray, dict]:
    """
    Square-root balanced truncation with dense Gramians.

    Returns:
        Tuple of (V, W, info) with ``W^T V = I``; info holds the Hankel singular values
    """
    A = system.A.toarray()
    controllability = la.solve_continuous_lyapunov(A, -system.B @ system.B.T)
    observability = la.solve_continuous_lyapunov(A.T, -system.C.T @ system.C)
    factor_p = _psd_factor(controllability)
    factor_q = _psd_factor(observability)
    U, hankel, Zt = la.svd(factor_q.T @ factor_p, full_matrices=False)
    if len(hankel) < order or hankel[order - 1] <= 0:
        raise ReductionError(f"Balanced truncation cannot reach order {order}: too few Hankel singular values")
    scale = 1.0 / np.sqrt(hankel[:order])
    V = factor_p @ Zt[:order].T * scale
    W = factor_q @ U[:, :order] * scale
    logger.info(f"Balanced truncation: leading Hankel singular values {hankel[: order + 1]}")
    return V, W, {"iterations": 0, "converged": True, "shifts": tuple(), "hankel": hankel}


def _assemble_reduced(model: FullOrderModel, domain: ParamDomain, V: np.ndarray, W: np.ndarray,
                      method: str, info: dict) -> ReducedModel:
    gram = W.T @ V
    condition = float(np.linalg.cond(gram))
    if not condition < MAX_PROJECTION_CONDITION:
        raise ReductionError(
            f"W^T V is ill-conditioned after {method} (cond = {condition:.3e})",
            shifts=info.get("shifts"), condition_number=condition,
        )
    return ReducedModel(
        A=la.solve(gram, W.T @ (model.A @ V)),
        b_taylor=la.solve(gram, W.T @ model.b_taylor.T).T,
        c_taylor=model.c_taylor @ V,
        V=V,
        W=W,
        domain=domain,
        method=method,
        iterations=info["iterations"],
        converged=info["converged"],
        shifts=tuple(complex(s) for s in info.get("shifts", ())),
    )


def normalize_state(reduced: ReducedModel, state_output_ratio: float = 1e-8,
                    alpha: float = 0.0) -> ReducedModel:
    """
    Rescale reduced coordinates so that ``||x_ss|| = ratio * |y_vol,ss|``.

    The nominal steady state at ``alpha`` fixes the scalar; the transfer
    function is unchanged.
    """
    x_ss = reduced.steady_state(alpha, 1.0)
    y_ss = float(reduced.C(alpha)[0] @ x_ss)
    state_norm = float(np.linalg.norm(x_ss))
    if state_norm == 0.0 or y_ss == 0.0:
        raise ReductionError("Cannot normalize reduced state: zero nominal steady state")
    gamma = state_norm / (state_output_ratio * abs(y_ss))
    return replace(
        reduced,
        b_taylor=reduced.b_taylor / gamma,
        c_taylor=reduced.c_taylor * gamma,
        V=reduced.V * gamma,
        W=reduced.W / gamma,
    )


def reduce(system: AugmentedSystem, order: int, method: str = "irka", max_iterations: int = 100,
           tolerance: float = 1e-6, fallback: bool = True,
           state_output_ratio: Optional[float] = 1e-8, dc_interpolation: bool = True,
           dc_tolerance: Optional[float] = None) -> ReducedModel:
    """
    Reduce the parametric model to order ``order``.

    Args:
        system: Augmented system built from the full-order model
        order: Target order n (``n == n_f`` keeps the identity projection)
        method: "irka" or "balanced_truncation"
        max_iterations: IRKA iteration limit
        tolerance: IRKA shift convergence tolerance
        fallback: Use balanced truncation if IRKA fails to converge or to stabilize
        state_output_ratio: Reduced-state normalization ratio; None keeps the raw basis
        dc_interpolation: Pin one IRKA interpolation point at s = 0
        dc_tolerance: Largest accepted relative steady-state volume-output error at
            alpha = 0; None skips the check

    Returns:
        ReducedModel satisfying the projection identities

    Raises:
        ReductionError: On failure without fallback, on invalid projections or when
            the steady-state error exceeds ``dc_tolerance``
    """
    model = system.model
    if not 1 <= order <= model.n_f:
        raise ReductionError(f"Reduced order must be in [1, {model.n_f}], got {order}")

    if order == model.n_f:
        identity = np.eye(model.n_f)
        reduced = _assemble_reduced(
            model, system.domain, identity, identity, "identity",
            {"iterations": 0, "converged": True},
        )
        logger.info("Reduced order equals full order: identity projection")
        return reduced

    if method == "irka":
        V, W, info = irka(system, order, max_iterations, tolerance, dc_interpolation)
        reduced = _assemble_reduced(model, system.domain, V, W, "irka", info)
        if not info["converged"] or not reduced.is_hurwitz():
            problem = "did not converge" if not info["converged"] else "produced an unstable model"
            if not fallback:
                raise ReductionError(
                    f"IRKA {problem} after {info['iterations']} iterations", shifts=info["shifts"]
                )
            logger.warning(
                f"IRKA {problem} after {info['iterations']} iterations "
                f"(last shifts {np.round(info['shifts'], 3)}), falling back to balanced truncation"
            )
            V, W, info = balanced_truncation(system, order)
            reduced = _assemble_reduced(model, system.domain, V, W, "balanced_truncation", info)
        else:
            logger.info(
                f"IRKA converged in {info['iterations']} iterations, shifts {np.round(info['shifts'], 3)}"
            )
    elif method == "balanced_truncation":
        V, W, info = balanced_truncation(system, order)
        reduced = _assemble_reduced(model, system.domain, V, W, "balanced_truncation", info)
    else:
        raise ReductionError(f"Unknown reduction method '{method}'")

    if state_output_ratio is not None:
        reduced = normalize_state(reduced, state_output_ratio)
    reduced.verify_projection(model)
    if dc_tolerance is not None:
        error = dc_gain_error(model, reduced)
        if error > dc_tolerance:
            raise ReductionError(
                f"{reduced.method} model misses the steady-state volume output by {100 * error:.2f} % "
                f"(tolerance {100 * dc_tolerance:.2f} %)",
                shifts=reduced.shifts,
            )
        logger.info(f"Steady-state volume-output error {error:.3e}")
    return reduced


def dc_gain_error(model: FullOrderModel, reduced: ReducedModel, alpha: float = 0.0,
                  power: float = 0.03) -> float:
    """Relative steady-state volume-output error of the reduced model."""
    full = float(model.C(alpha)[0] @ model.steady_state(alpha, power))
    approx = float(reduced.C(alpha)[0] @ reduced.steady_state(alpha, power))
    return abs(full - approx) / abs(full)


def check_monotone_error(errors: Sequence[Tuple[int, float]], tolerance: float = 0.1) -> bool:
    """
    Check that the reduction error does not grow with the order.

    Args:
        errors: (order, relative error) pairs
        tolerance: Relative growth tolerated with a warning

    Returns:
        True if monotone, False if violated within tolerance

    Raises:
        ReductionError: If the error grows by more than ``tolerance``
    """
    ordered = sorted(errors)
    monotone = True
    for (low_order, low_error), (high_order, high_error) in zip(ordered, ordered[1:]):
        if high_error <= low_error:
            continue
        if high_error <= (1.0 + tolerance) * low_error:
            logger.warning(
                f"Reduction error grew from {low_error:.3e} (n={low_order}) to {high_error:.3e} (n={high_order})"
            )
            monotone = False
        else:
            raise ReductionError(
                f"Reduction error grew from {low_error:.3e} (n={low_order}) to {high_error:.3e} (n={high_order})"
            )
    return monotone
