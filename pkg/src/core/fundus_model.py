"""
Fundus Heat Model - full-order assembly
=======================================

Builds the spatially discretized heat diffusion model of the irradiated
eye fundus:

- Layer stack, material constants and cylinder geometry
- Axisymmetric (r, z) finite-difference grid with layer-aligned nodes
- Sparse diffusion operator with Dirichlet boundaries and r = 0 symmetry
- Taylor coefficients of the absorption-dependent input operator b(alpha)
- Taylor coefficients of the output operator C(alpha): volume and peak temperature

The absorption coefficient is parameterized as mu = (1 + alpha) * mu_0.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.optimize import brentq

from .errors import GeometryError, GridError
from .taylor import absorbed_fraction, absorbed_fraction_coefficients, taylor_sum

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Layer:
    """Single tissue layer."""
    name: str
    thickness: float  # m
    absorption: float  # 1/m, nominal mu_0


DEFAULT_LAYERS: Tuple[Layer, ...] = (
    Layer("retina", 190e-6, 0.0),
    Layer("rpe", 6e-6, 1204e2),
    Layer("unpigmented", 4e-6, 0.0),
    Layer("choroid", 400e-6, 270e2),
    Layer("sclera", 139e-6, 0.0),
)

# Axial node counts per layer (interfaces included), RPE count odd
DEFAULT_NODES_PER_LAYER: Tuple[int, ...] = (20, 7, 3, 41, 15)


@dataclass(frozen=True)
class LayerStack:
    """
    Ordered tissue layers along increasing depth z (retina first, sclera last).
    """
    layers: Tuple[Layer, ...] = DEFAULT_LAYERS

    def __post_init__(self):
        if not self.layers:
            raise GeometryError("Layer stack must contain at least one layer")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise GeometryError(f"Layer names must be unique: {names}")
        for layer in self.layers:
            if not layer.thickness > 0:
                raise GeometryError(f"Layer '{layer.name}' has non-positive thickness {layer.thickness}")
            if layer.absorption < 0:
                raise GeometryError(f"Layer '{layer.name}' has negative absorption {layer.absorption}")

    @property
    def total_thickness(self) -> float:
        return float(sum(layer.thickness for layer in self.layers))

    @property
    def names(self) -> List[str]:
        return [layer.name for layer in self.layers]

    def index(self, name: str) -> int:
        """Position of the named layer in the stack."""
        try:
            return self.names.index(name)
        except ValueError:
            raise GeometryError(f"Unknown layer '{name}', available: {self.names}")

    def interface_offsets(self) -> np.ndarray:
        """Depths of all layer interfaces measured from the top of the stack."""
        return np.concatenate(([0.0], np.cumsum([layer.thickness for layer in self.layers])))


@dataclass(frozen=True)
class MaterialConstants:
    """Thermal constants of tissue, taken equal to those of water."""
    density: float = 993.0  # kg/m^3
    heat_capacity: float = 4176.0  # J/(kg K)
    conductivity: float = 0.627  # W/(m K)

    def __post_init__(self):
        for name in ("density", "heat_capacity", "conductivity"):
            value = getattr(self, name)
            if not value > 0:
                raise GeometryError(f"Material constant '{name}' must be positive, got {value}")

    @property
    def volumetric_heat_capacity(self) -> float:
        return self.density * self.heat_capacity

    @property
    def diffusivity(self) -> float:
        """Thermal diffusivity k / (rho C_p) in m^2/s."""
        return self.conductivity / self.volumetric_heat_capacity


@dataclass(frozen=True)
class FundusGeometry:
    """
    Irradiated inner cylinder inside a larger outer cylinder.

    The axial extent [z_begin, z_end] equals the layer stack; the peak
    temperature is read at r = 0 in the middle of ``peak_layer``.
    """
    spot_radius: float = 1e-4  # R_I, m
    outer_radius: float = 1e-3  # R_out, m
    z_begin: float = 0.0  # z_b, m
    layers: LayerStack = field(default_factory=LayerStack)
    materials: MaterialConstants = field(default_factory=MaterialConstants)
    peak_layer: str = "rpe"

    def __post_init__(self):
        if not self.spot_radius > 0:
            raise GeometryError(f"Spot radius must be positive, got {self.spot_radius}")
        if not self.outer_radius > self.spot_radius:
            raise GeometryError(
                f"Outer radius {self.outer_radius} must exceed spot radius {self.spot_radius}"
            )
        self.layers.index(self.peak_layer)

    @property
    def z_end(self) -> float:
        return self.z_begin + self.layers.total_thickness

    @property
    def peak_depth(self) -> float:
        """Absolute z-coordinate of the peak-temperature point."""
        offsets = self.layers.interface_offsets()
        index = self.layers.index(self.peak_layer)
        return self.z_begin + offsets[index] + 0.5 * self.layers.layers[index].thickness


@dataclass(frozen=True)
class GridSettings:
    """Node counts and spacing strategy for the axisymmetric grid."""
    n_radial: int = 40  # radial intervals on [0, R_out]
    n_inner: int = 10  # radial intervals across the spot radius (graded spacing)
    nodes_per_layer: Tuple[int, ...] = DEFAULT_NODES_PER_LAYER
    radial_spacing: str = "graded"  # "graded" or "uniform"
    fine_radius_factor: float = 2.0  # graded: uniform fine spacing up to factor * R_I

    def refined(self) -> "GridSettings":
        """Settings with every radial and axial interval halved."""
        return GridSettings(
            n_radial=2 * self.n_radial,
            n_inner=2 * self.n_inner,
            nodes_per_layer=tuple(2 * count - 1 for count in self.nodes_per_layer),
            radial_spacing=self.radial_spacing,
            fine_radius_factor=self.fine_radius_factor,
        )


@dataclass(frozen=True, eq=False)
class AxiGrid:
    """
    Axisymmetric finite-difference grid in the r-z plane.

    Unknowns live on radial nodes r_0 .. r_{Nr-1} and axial nodes
    z_1 .. z_{Nz-1}; the nodes r = R_out, z = z_b and z = z_e are Dirichlet
    boundary nodes and carry no unknown. Unknowns are ordered radial-major:
    ``index = i_r * n_z + (j_z - 1)``.
    """
    r: np.ndarray
    z: np.ndarray
    node_layer: np.ndarray  # layer index of every axial node (interface -> deeper layer)
    layer_node_ranges: Tuple[Tuple[int, int], ...]  # first/last axial node of each layer
    spot_index: int  # radial node at r = R_I
    peak_node: int  # axial node of the peak-temperature point

    @property
    def n_r(self) -> int:
        """Number of radial unknown positions."""
        return len(self.r) - 1

    @property
    def n_z(self) -> int:
        """Number of axial unknown positions."""
        return len(self.z) - 2

    @property
    def n_unknowns(self) -> int:
        return self.n_r * self.n_z

    @property
    def r_unknown(self) -> np.ndarray:
        return self.r[:-1]

    @property
    def z_unknown(self) -> np.ndarray:
        return self.z[1:-1]

    def index(self, i_r: int, j_z: int) -> int:
        """Unknown index of grid node (i_r, j_z); j_z counts all axial nodes."""
        if not (0 <= i_r < self.n_r and 1 <= j_z <= self.n_z):
            raise GridError(f"Node ({i_r}, {j_z}) is a boundary node or outside the grid")
        return i_r * self.n_z + (j_z - 1)

    @property
    def peak_index(self) -> int:
        return self.index(0, self.peak_node)


def build_grid(geometry: FundusGeometry, n_radial: int = 40,
               nodes_per_layer: Optional[Sequence[int]] = None, n_inner: int = 10,
               radial_spacing: str = "graded", fine_radius_factor: float = 2.0) -> AxiGrid:
    """
    Build the layer-aligned axisymmetric grid.

    Args:
        geometry: Fundus geometry
        n_radial: Number of radial intervals (>= 8)
        nodes_per_layer: Axial node count per layer, interfaces included
            (>= 2 each, odd for the peak layer)
        n_inner: Radial intervals across the spot radius for graded spacing
        radial_spacing: "graded" or "uniform"
        fine_radius_factor: Graded spacing stays uniform up to this multiple of R_I

    Returns:
        AxiGrid with a node exactly at the peak-temperature location

    Raises:
        GridError: If node counts cannot align with layer interfaces
    """
    if n_radial < 8:
        raise GridError(f"At least 8 radial intervals required, got {n_radial}")
    layers = geometry.layers.layers
    counts = tuple(DEFAULT_NODES_PER_LAYER if nodes_per_layer is None else nodes_per_layer)
    if len(counts) != len(layers):
        raise GridError(f"Got {len(counts)} node counts for {len(layers)} layers")
    for layer, count in zip(layers, counts):
        if count < 2:
            raise GridError(f"Layer '{layer.name}' needs at least 2 nodes, got {count}")
    peak_position = geometry.layers.index(geometry.peak_layer)
    if counts[peak_position] % 2 == 0:
        raise GridError(
            f"Peak layer '{geometry.peak_layer}' needs an odd node count so its mid-depth "
            f"is a grid node, got {counts[peak_position]}"
        )

    if radial_spacing == "graded":
        r, spot_index = _graded_radial_nodes(geometry, n_radial, n_inner, fine_radius_factor)
    elif radial_spacing == "uniform":
        r, spot_index = _uniform_radial_nodes(geometry, n_radial)
    else:
        raise GridError(f"Unknown radial spacing '{radial_spacing}'")

    z_parts = []
    node_layer = []
    ranges = []
    start = 0
    offsets = geometry.z_begin + geometry.layers.interface_offsets()
    for position, (top, bottom, count) in enumerate(zip(offsets[:-1], offsets[1:], counts)):
        nodes = np.linspace(top, bottom, count)
        if position > 0:
            nodes = nodes[1:]
        z_parts.append(nodes)
        node_layer.extend([position] * (count - 1))
        ranges.append((start, start + count - 1))
        start += count - 1
    node_layer.append(len(layers) - 1)
    z = np.concatenate(z_parts)
    # Interfaces are exact by construction
    for (first, last), top, bottom in zip(ranges, offsets[:-1], offsets[1:]):
        z[first], z[last] = top, bottom

    peak_first, peak_last = ranges[peak_position]
    grid = AxiGrid(
        r=r,
        z=z,
        node_layer=np.asarray(node_layer, dtype=int),
        layer_node_ranges=tuple(ranges),
        spot_index=spot_index,
        peak_node=(peak_first + peak_last) // 2,
    )
    if np.any(np.diff(grid.r) <= 0) or np.any(np.diff(grid.z) <= 0):
        raise GridError("Grid spacing must be strictly positive")
    logger.info(
        f"Built grid: {grid.n_r} x {grid.n_z} unknowns ({grid.n_unknowns} total), "
        f"{radial_spacing} radial spacing"
    )
    return grid


def build_grid_from_settings(geometry: FundusGeometry, settings: GridSettings) -> AxiGrid:
    """Build a grid from a ``GridSettings`` block."""
    return build_grid(
        geometry,
        n_radial=settings.n_radial,
        nodes_per_layer=settings.nodes_per_layer,
        n_inner=settings.n_inner,
        radial_spacing=settings.radial_spacing,
        fine_radius_factor=settings.fine_radius_factor,
    )


def _uniform_radial_nodes(geometry: FundusGeometry, n_radial: int) -> Tuple[np.ndarray, int]:
    spot_position = n_radial * geometry.spot_radius / geometry.outer_radius
    spot_index = int(round(spot_position))
    if spot_index < 1 or abs(spot_position - spot_index) > 1e-9:
        raise GridError(
            f"Uniform spacing with {n_radial} intervals does not place a node at the spot radius"
        )
    r = np.linspace(0.0, geometry.outer_radius, n_radial + 1)
    r[spot_index] = geometry.spot_radius
    return r, spot_index


def _graded_radial_nodes(geometry: FundusGeometry, n_radial: int, n_inner: int,
                         factor: float) -> Tuple[np.ndarray, int]:
    if n_inner < 1:
        raise GridError(f"Need at least one radial interval inside the spot, got {n_inner}")
    spacing = geometry.spot_radius / n_inner
    n_fine = max(n_inner, int(round(factor * n_inner)))
    fine_end = n_fine * spacing
    n_outer = n_radial - n_fine
    if n_outer < 1 or fine_end >= geometry.outer_radius:
        raise GridError(
            f"{n_radial} radial intervals leave no room outside the fine region "
            f"({n_fine} intervals up to r = {fine_end:.3e} m)"
        )
    length = geometry.outer_radius - fine_end
    powers = np.arange(1, n_outer + 1)

    if n_outer * spacing >= length:
        steps = np.full(n_outer, length / n_outer)
    else:
        def excess(ratio: float) -> float:
            return float(np.sum(spacing * ratio ** powers) - length)

        upper = 2.0
        while excess(upper) < 0:
            upper *= 2.0
        ratio = brentq(excess, 1.0, upper, xtol=1e-14)
        steps = spacing * ratio ** powers
        logger.debug(f"Graded radial spacing: ratio {ratio:.6f} over {n_outer} intervals")

    r = np.concatenate((np.arange(n_fine + 1) * spacing, fine_end + np.cumsum(steps)))
    r[n_inner] = geometry.spot_radius
    r[-1] = geometry.outer_radius
    return r, n_inner


def _radial_operator(r: np.ndarray) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Radial part (1/r) d/dr (r d/dr) on nodes r_0 .. r_{Nr-1}, plus cell areas."""
    h = np.diff(r)
    n = len(r) - 1
    lower = np.zeros(n)
    upper = np.zeros(n)
    weights = np.zeros(n)

    # Symmetry closure: limit 2 d^2/dr^2 at the axis
    upper[0] = 4.0 / h[0] ** 2
    weights[0] = h[0] ** 2 / 8.0

    i = np.arange(1, n)
    r_minus = 0.5 * (r[i - 1] + r[i])
    r_plus = 0.5 * (r[i] + r[i + 1])
    weights[1:] = r[i] * 0.5 * (h[i - 1] + h[i])
    lower[1:] = r_minus / h[i - 1] / weights[1:]
    upper[1:] = r_plus / h[i] / weights[1:]

    diagonal = -(lower + upper)
    operator = sp.diags(
        [lower[1:], diagonal, upper[:-1]], offsets=[-1, 0, 1], shape=(n, n), format="csr"
    )
    return operator, 2.0 * math.pi * weights


def _axial_operator(z: np.ndarray) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Axial second derivative on interior nodes z_1 .. z_{Nz-1}, plus cell lengths."""
    g = np.diff(z)
    lengths = 0.5 * (g[:-1] + g[1:])
    lower = 1.0 / (g[:-1] * lengths)
    upper = 1.0 / (g[1:] * lengths)
    n = len(lengths)
    operator = sp.diags(
        [lower[1:], -(lower + upper), upper[:-1]], offsets=[-1, 0, 1], shape=(n, n), format="csr"
    )
    return operator, lengths


def assemble_diffusion(grid: AxiGrid, materials: MaterialConstants) -> sp.csr_matrix:
    """
    Assemble the sparse operator (k / rho C_p) * Laplacian in cylindrical coordinates.

    Homogeneous Dirichlet rows at r = R_out, z = z_b and z = z_e are
    eliminated; at r = 0 the symmetry limit 2 d^2/dr^2 replaces the radial
    terms.

    Args:
        grid: Axisymmetric grid
        materials: Thermal constants

    Returns:
        CSR matrix of shape (n_f, n_f) in 1/s
    """
    radial, _ = _radial_operator(grid.r)
    axial, _ = _axial_operator(grid.z)
    operator = sp.kron(radial, sp.identity(grid.n_z)) + sp.kron(sp.identity(grid.n_r), axial)
    operator = (materials.diffusivity * operator).tocsr()
    logger.debug(f"Assembled diffusion operator with {operator.nnz} non-zeros")
    return operator


def cell_volumes(grid: AxiGrid) -> np.ndarray:
    """Control volume (m^3) attached to every unknown, in unknown order."""
    _, areas = _radial_operator(grid.r)
    _, lengths = _axial_operator(grid.z)
    return np.kron(areas, lengths)


def optical_depth(grid: AxiGrid, geometry: FundusGeometry) -> np.ndarray:
    """Cumulative nominal optical depth s(z) = int_{z_b}^{z} mu_0 at every axial node."""
    segment_mu = _segment_absorption(grid, geometry)
    return np.concatenate(([0.0], np.cumsum(segment_mu * np.diff(grid.z))))


def _segment_absorption(grid: AxiGrid, geometry: FundusGeometry) -> np.ndarray:
    """Nominal absorption of every axial segment [z_j, z_{j+1}] (layer of its upper node)."""
    absorption = np.array([layer.absorption for layer in geometry.layers.layers])
    return absorption[grid.node_layer[:-1]]


def cell_optical_depths(grid: AxiGrid, geometry: FundusGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optical depth at the upper and lower face of every axial control volume.

    The control volume of interior node z_j spans half of each neighbouring
    segment; each half lies inside a single layer, so the depth at a face is
    exact.
    """
    depth = optical_depth(grid, geometry)
    half = 0.5 * _segment_absorption(grid, geometry) * np.diff(grid.z)
    return depth[1:-1] - half[:-1], depth[1:-1] + half[1:]


def spot_fractions(grid: AxiGrid) -> np.ndarray:
    """
    Share of the irradiated disk pi R_I^2 covered by every radial control volume.

    The cell of r_i spans [r_i - h_{i-1}/2, r_i + h_i/2] (from 0 on the axis);
    the cell at r = R_I only counts its inner part ring. The shares sum to one.
    """
    r = grid.r
    h = np.diff(r)
    inner = np.concatenate(([0.0], r[1:-1] - 0.5 * h[:-1]))
    outer = r[:-1] + 0.5 * h
    spot_radius = r[grid.spot_index]
    return (np.minimum(outer, spot_radius) ** 2 - np.minimum(inner, spot_radius) ** 2) / spot_radius ** 2


def _heating_rates(grid: AxiGrid, geometry: FundusGeometry, absorbed: np.ndarray) -> np.ndarray:
    """Convert absorbed power fractions per cell into heating rates in K/(s W)."""
    _, areas = _radial_operator(grid.r)
    _, lengths = _axial_operator(grid.z)
    radial = spot_fractions(grid) / areas
    scale = 1.0 / geometry.materials.volumetric_heat_capacity
    return np.stack([scale * np.kron(radial, fraction / lengths) for fraction in absorbed])


def source_taylor(grid: AxiGrid, geometry: FundusGeometry, k_b: int) -> np.ndarray:
    """
    Taylor coefficients b_0 .. b_{k_B} of the Lambert-Beer input vector.

    Every control volume receives the laser power absorbed inside it, i.e.
    its share of the spot times the exact Lambert-Beer loss between its
    upper and lower face, divided by rho C_p and its volume. The injected
    power therefore equals the physically absorbed fraction on any grid.

    Args:
        grid: Axisymmetric grid
        geometry: Fundus geometry
        k_b: Expansion order (>= 0)

    Returns:
        Array of shape (k_b + 1, n_f) in K/(s W)
    """
    top, bottom = cell_optical_depths(grid, geometry)
    return _heating_rates(grid, geometry, absorbed_fraction_coefficients(top, bottom, k_b))


def assemble_source(grid: AxiGrid, geometry: FundusGeometry, alpha: float) -> np.ndarray:
    """Directly assembled input vector b(alpha), without Taylor truncation."""
    top, bottom = cell_optical_depths(grid, geometry)
    return _heating_rates(grid, geometry, absorbed_fraction(top, bottom, alpha)[np.newaxis])[0]


def output_taylor(grid: AxiGrid, geometry: FundusGeometry, k_c: int) -> np.ndarray:
    """
    Taylor coefficients c_0 .. c_{k_C} of the two-row output operator.

    Row 0 is the volume temperature: the disk-averaged temperature weighted
    by the absorbed laser power, integrated cell by cell with the same
    absorbed fractions that feed the source, so ``c_vol = rho C_p * V * b``
    entrywise. Row 1 is the peak temperature at r = 0 in the middle of the
    peak layer and does not depend on alpha.

    Returns:
        Array of shape (k_c + 1, 2, n_f)
    """
    top, bottom = cell_optical_depths(grid, geometry)
    axial = absorbed_fraction_coefficients(top, bottom, k_c)
    radial = spot_fractions(grid)
    coefficients = np.zeros((k_c + 1, 2, grid.n_unknowns))
    for i in range(k_c + 1):
        coefficients[i, 0] = np.kron(radial, axial[i])
    coefficients[0, 1, grid.peak_index] = 1.0
    return coefficients


def assemble_output(grid: AxiGrid, geometry: FundusGeometry, alpha: float) -> np.ndarray:
    """Directly assembled output operator C(alpha) of shape (2, n_f)."""
    top, bottom = cell_optical_depths(grid, geometry)
    rows = np.zeros((2, grid.n_unknowns))
    rows[0] = np.kron(spot_fractions(grid), absorbed_fraction(top, bottom, alpha))
    rows[1, grid.peak_index] = 1.0
    return rows


@dataclass(frozen=True, eq=False)
class FullOrderModel:
    """
    Full-order parametric model  x' = A x + b(alpha) u,  y = C(alpha) x.

    ``b_taylor`` has shape (k_B + 1, n_f); ``c_taylor`` has shape
    (k_C + 1, 2, n_f) with row 0 the volume and row 1 the peak output.
    """
    A: sp.csr_matrix
    b_taylor: np.ndarray
    c_taylor: np.ndarray
    grid: AxiGrid
    geometry: FundusGeometry

    @property
    def n_f(self) -> int:
        return self.A.shape[0]

    @property
    def k_b(self) -> int:
        return len(self.b_taylor) - 1

    @property
    def k_c(self) -> int:
        return len(self.c_taylor) - 1

    def b(self, alpha: float) -> np.ndarray:
        """Taylor-polynomial input vector b(alpha)."""
        return taylor_sum(self.b_taylor, alpha)

    def C(self, alpha: float) -> np.ndarray:
        """Taylor-polynomial output operator C(alpha), shape (2, n_f)."""
        return taylor_sum(self.c_taylor, alpha)

    def steady_state(self, alpha: float, power: float) -> np.ndarray:
        """Steady-state temperature field -A^{-1} b(alpha) u."""
        return -sla.spsolve(self.A.tocsc(), self.b(alpha) * power)


def build_full_order_model(geometry: Optional[FundusGeometry] = None,
                           grid_settings: Optional[GridSettings] = None,
                           k_b: int = 8, k_c: int = 8) -> FullOrderModel:
    """
    Assemble the complete full-order model from geometry and grid settings.

    Args:
        geometry: Fundus geometry (defaults to the porcine-eye values)
        grid_settings: Grid node counts (defaults to ``GridSettings()``)
        k_b: Taylor order of the input operator
        k_c: Taylor order of the output operator

    Returns:
        FullOrderModel
    """
    geometry = geometry or FundusGeometry()
    grid = build_grid_from_settings(geometry, grid_settings or GridSettings())
    A = assemble_diffusion(grid, geometry.materials)
    model = FullOrderModel(
        A=A,
        b_taylor=source_taylor(grid, geometry, k_b),
        c_taylor=output_taylor(grid, geometry, k_c),
        grid=grid,
        geometry=geometry,
    )
    logger.info(f"Full-order model: n_f = {model.n_f}, k_B = {k_b}, k_C = {k_c}")
    return model
