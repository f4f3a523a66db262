"""Finite-difference Hamiltonians on parameter grids.

Operators are assembled in flux (divergence) form: ``W A = M`` with ``W`` the diagonal
volume weight and ``M`` symmetric, so ``A`` is self-adjoint in ``<u, v>_w``.

Row ordering is frozen: 2D rows are ``j * n1 + i`` (``j`` indexes ``s2``), 3D rows are
``k * n1 * n2 + j * n1 + i`` (``k`` indexes the q-layers).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sparse

from squeezeqm.geometry import (
    PointGeometry, SurfacePatch, TubeValidityError, max_admissible_epsilon, surface_geometry,
    tube_metric
)

_logger = logging.getLogger(__name__)


class DiscretizationError(ValueError):
    """A grid or operator is malformed"""


@dataclass(frozen=True)
class Grid2:
    n1: int
    n2: int
    lengths: Tuple[float, float]
    periodic: Tuple[bool, bool]

    def __post_init__(self):
        if self.n1 < 3 or self.n2 < 3:
            raise DiscretizationError(f'grids need at least 3 points per direction, got {self.shape}')

    @classmethod
    def for_patch(cls, patch: SurfacePatch, n1: int, n2: int) -> 'Grid2':
        return cls(n1, n2, patch.lengths, patch.periodic)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n2, self.n1)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def h1(self) -> float:
        return self._spacing(0)

    @property
    def h2(self) -> float:
        return self._spacing(1)

    def _spacing(self, axis: int) -> float:
        n = (self.n1, self.n2)[axis]
        return self.lengths[axis] / (n if self.periodic[axis] else n + 1)

    @property
    def offsets(self) -> Tuple[int, int]:
        """Position of interior node ``(0, 0)`` inside the extended node array, as ``(o1, o2)``."""
        return (0 if self.periodic[0] else 1, 0 if self.periodic[1] else 1)

    def index(self, i, j):
        return j * self.n1 + i

    def _axis(self, axis: int, extended: bool) -> np.ndarray:
        n, h = (self.n1, self.n2)[axis], self._spacing(axis)
        if self.periodic[axis]:
            return h * np.arange(n)
        if extended:
            return h * np.arange(n + 2)
        return h * np.arange(1, n + 1)

    def coordinates(self, extended: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """Node coordinates as ``(s1, s2)`` arrays of shape ``(n2, n1)``; ``extended`` adds the
        Dirichlet boundary nodes that carry ghost values."""
        s2, s1 = np.meshgrid(self._axis(1, extended), self._axis(0, extended), indexing='ij')
        return s1, s2

    def interior(self, values: np.ndarray) -> np.ndarray:
        """Restrict an extended node array (leading axes ``(m2, m1)``) to the interior nodes."""
        o1, o2 = self.offsets
        return values[o2:o2 + self.n2, o1:o1 + self.n1]


@dataclass(frozen=True)
class Grid3:
    plane: Grid2
    nq: int
    epsilon: float

    def __post_init__(self):
        if self.nq < 1:
            raise DiscretizationError('a tube grid needs at least one q-layer')
        if not self.epsilon > 0:
            raise DiscretizationError(f'tube half-width must be positive, got {self.epsilon}')

    @property
    def hq(self) -> float:
        return 2.0 * self.epsilon / (self.nq + 1)

    @property
    def size(self) -> int:
        return self.nq * self.plane.size

    @property
    def q_values(self) -> np.ndarray:
        return -self.epsilon + self.hq * np.arange(1, self.nq + 1)

    @property
    def q_half_values(self) -> np.ndarray:
        """Cell faces ``q_{k - 1/2}`` for ``k = 0 .. nq`` (walls included)."""
        return -self.epsilon + self.hq * (np.arange(self.nq + 1) + 0.5)

    @property
    def center_layer(self) -> Optional[int]:
        return (self.nq - 1) // 2 if self.nq % 2 else None

    def index(self, i, j, k):
        return k * self.plane.size + self.plane.index(i, j)


@dataclass(frozen=True)
class SparseOperator:
    """A sparse matrix together with the positive weights of the inner product in which it is
    meant to be self-adjoint. ``similarity`` is set by :func:`symmetrize` to ``W^{1/2}`` of
    the source operator."""
    matrix: sparse.csr_matrix
    weight: np.ndarray
    symmetry_defect: float = 0.0
    similarity: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector


@dataclass(frozen=True)
class GeometryCache:
    """Surface geometry on the extended node array of a grid."""
    grid: Grid2
    geometry: PointGeometry

    @classmethod
    def build(cls, patch: SurfacePatch, grid: Grid2) -> 'GeometryCache':
        s1, s2 = grid.coordinates(extended=True)
        return cls(grid, surface_geometry(patch, s1, s2))

    def interior(self, name: str) -> np.ndarray:
        return self.grid.interior(getattr(self.geometry, name))


@dataclass(frozen=True)
class Hamiltonian2D:
    operator: SparseOperator
    laplacian: SparseOperator
    cache: GeometryCache
    grid: Grid2
    surface: str
    potential: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Hamiltonian3D:
    operator: SparseOperator
    cache: GeometryCache
    grid: Grid3
    surface: str
    f: np.ndarray = field(repr=False)
    epsilon: float = 0.0
    # the s-fluxes of every layer alone (unweighted), and normal_potential at every node
    tangential: Optional[sparse.csr_matrix] = field(default=None, repr=False)
    normal_potential: Optional[np.ndarray] = field(default=None, repr=False)


def _extended_index(index: np.ndarray, step: int, n: int, periodic: bool) -> np.ndarray:
    return (index + step) % n if periodic else index + 1 + step


def _neighbor(index: np.ndarray, step: int, n: int, periodic: bool) -> Tuple[np.ndarray, np.ndarray]:
    if periodic:
        return (index + step) % n, np.ones(index.shape, dtype=bool)
    target = index + step
    return target, (target >= 0) & (target < n)


class _Entries:
    """COO triplets accumulated before conversion to CSR."""
    def __init__(self):
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.values: List[np.ndarray] = []

    def add(self, rows: np.ndarray, cols: np.ndarray, values: np.ndarray, mask=None):
        if mask is not None:
            rows, cols, values = rows[mask], cols[mask], values[mask]
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.values.append(values.ravel())

    def matrix(self, size: int) -> sparse.csr_matrix:
        return sparse.coo_matrix(
            (np.concatenate(self.values), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(size, size)
        ).tocsr()


def _tangential_flux(entries: _Entries, grid: Grid2, coefficients: np.ndarray, offset: int = 0):
    """Add ``-d_a (C^{ab} d_b)`` in flux form; ``coefficients`` has shape ``(m2, m1, 2, 2)`` on
    the extended node array."""
    n1, n2 = grid.n1, grid.n2
    p1, p2 = grid.periodic
    J, I = np.meshgrid(np.arange(n2), np.arange(n1), indexing='ij')
    rows = offset + grid.index(I, J)
    ej, ei = _extended_index(J, 0, n2, p2), _extended_index(I, 0, n1, p1)
    h1, h2 = grid.h1, grid.h2

    C11, C12, C22 = coefficients[..., 0, 0], coefficients[..., 0, 1], coefficients[..., 1, 1]
    for step in (1, -1):
        c1 = 0.5 * (C11[ej, ei] + C11[ej, _extended_index(I, step, n1, p1)]) / (h1 * h1)
        c2 = 0.5 * (C22[ej, ei] + C22[_extended_index(J, step, n2, p2), ei]) / (h2 * h2)
        entries.add(rows, rows, c1 + c2)
        target, valid = _neighbor(I, step, n1, p1)
        entries.add(rows, offset + grid.index(target, J), -c1, valid)
        target, valid = _neighbor(J, step, n2, p2)
        entries.add(rows, offset + grid.index(I, target), -c2, valid)

    scale = 1.0 / (4.0 * h1 * h2)
    for step1 in (1, -1):
        for step2 in (1, -1):
            coupling = step1 * step2 * scale * (
                C12[ej, _extended_index(I, step1, n1, p1)] + C12[_extended_index(J, step2, n2, p2), ei]
            )
            target1, valid1 = _neighbor(I, step1, n1, p1)
            target2, valid2 = _neighbor(J, step2, n2, p2)
            entries.add(rows, offset + grid.index(target1, target2), -coupling, valid1 & valid2)


def _weighted(matrix: sparse.csr_matrix, weight: np.ndarray) -> SparseOperator:
    return SparseOperator((sparse.diags(1.0 / weight) @ matrix).tocsr(), weight)


def assemble_h2d(patch: SurfacePatch, grid: Grid2) -> Hamiltonian2D:
    """``-Delta_S - (H^2 - K)`` with ``hbar^2 / 2m = 1``, weighted by ``sqrt(det g_S)``."""
    cache = GeometryCache.build(patch, grid)
    geometry = cache.geometry
    coefficients = geometry.sqrt_detgS[..., None, None] * geometry.gS_inv

    entries = _Entries()
    _tangential_flux(entries, grid, coefficients)
    stiffness = entries.matrix(grid.size)

    weight = cache.interior('sqrt_detgS').ravel()
    potential = cache.interior('geo_pot').ravel()
    hamiltonian = stiffness - sparse.diags(potential * weight)
    _logger.debug('Assembled %s 2D Hamiltonian: %d rows, %d nonzeros', patch.name, grid.size,
                  hamiltonian.nnz)
    return Hamiltonian2D(
        operator=_weighted(hamiltonian.tocsr(), weight),
        laplacian=_weighted(stiffness, weight),
        cache=cache,
        grid=grid,
        surface=patch.name,
        potential=potential,
    )


def assemble_h3d(patch: SurfacePatch, grid: Grid3, unit_weight: bool = False) -> Hamiltonian3D:
    """``-Delta`` on the tube ``|q| < epsilon`` in coordinates ``(s1, s2, q)`` with Dirichlet
    walls, weighted by ``sqrt(det g_S) f``. ``unit_weight`` replaces ``f`` by 1 and ``g_{S_q}`` by
    ``g_S`` in every layer."""
    plane = grid.plane
    cache = GeometryCache.build(patch, plane)
    geometry = cache.geometry
    admissible = max_admissible_epsilon(geometry)
    if not unit_weight and grid.epsilon >= admissible:
        worst = np.unravel_index(np.argmax(geometry.max_abs_curvature), geometry.H.shape)
        raise TubeValidityError(grid.epsilon, admissible,
                                (float(geometry.s1[worst]), float(geometry.s2[worst])))

    sqrt_g = geometry.sqrt_detgS
    entries = _Entries()
    weights, f_layers, potentials = [], [], []
    for k, q in enumerate(grid.q_values):
        if unit_weight:
            f = np.ones_like(sqrt_g)
            coefficients = sqrt_g[..., None, None] * geometry.gS_inv
            potential = np.zeros_like(sqrt_g)
        else:
            tube = tube_metric(geometry, q)
            f = tube.f
            coefficients = (sqrt_g * f)[..., None, None] * np.linalg.inv(tube.gSq)
            potential = geometry.normal_potential(q)
        _tangential_flux(entries, plane, coefficients, offset=k * plane.size)
        f_layers.append(plane.interior(f).ravel())
        weights.append(plane.interior(sqrt_g * f).ravel())
        potentials.append(plane.interior(potential).ravel())
    tangential = entries.matrix(grid.size)

    # q-fluxes through the faces between layers, walls at q = +-epsilon
    interior_sqrt_g = plane.interior(sqrt_g).ravel()
    face_f = [
        np.ones_like(interior_sqrt_g) if unit_weight else plane.interior(geometry.weight(q)).ravel()
        for q in grid.q_half_values
    ]
    entries = _Entries()
    nodes = np.arange(plane.size)
    hq2 = grid.hq * grid.hq
    for k in range(grid.nq):
        rows = k * plane.size + nodes
        lower = interior_sqrt_g * face_f[k] / hq2
        upper = interior_sqrt_g * face_f[k + 1] / hq2
        entries.add(rows, rows, lower + upper)
        if k > 0:
            entries.add(rows, rows - plane.size, -lower)
        if k < grid.nq - 1:
            entries.add(rows, rows + plane.size, -upper)

    weight = np.concatenate(weights)
    matrix = (tangential + entries.matrix(grid.size)).tocsr()
    _logger.debug('Assembled %s tube Hamiltonian (epsilon=%g): %d rows, %d nonzeros', patch.name,
                  grid.epsilon, grid.size, matrix.nnz)
    return Hamiltonian3D(
        operator=_weighted(matrix, weight),
        cache=cache,
        grid=grid,
        surface=patch.name,
        f=np.concatenate(f_layers),
        epsilon=grid.epsilon,
        tangential=tangential,
        normal_potential=np.concatenate(potentials),
    )


def symmetry_defect(matrix: sparse.spmatrix, weight: np.ndarray) -> float:
    """``max |W A - A^T W| / max |W A|``."""
    weighted = (sparse.diags(weight) @ matrix).tocsr()
    scale = abs(weighted).max()
    if scale == 0:
        return 0.0
    return float(abs(weighted - weighted.T).max() / scale)


def symmetrize(op: SparseOperator) -> SparseOperator:
    """``S = W^{1/2} A W^{-1/2}`` made exactly symmetric; the defect removed by the final
    averaging is recorded."""
    if np.any(op.weight <= 0):
        raise DiscretizationError('weights must be positive to symmetrize')
    root = np.sqrt(op.weight)
    similar = (sparse.diags(root) @ op.matrix @ sparse.diags(1.0 / root)).tocsr()
    difference = similar - similar.T
    defect = float(abs(difference).max()) if difference.nnz else 0.0
    symmetric = (0.5 * (similar + similar.T)).tocsr()
    _logger.debug('Symmetrized %d x %d operator, defect %.3g', op.dimension, op.dimension, defect)
    return SparseOperator(symmetric, np.ones(op.dimension), symmetry_defect=defect, similarity=root)


def transverse_ground_energy(grid: Grid3) -> float:
    """Ground energy of the Dirichlet q-stencil alone; tends to ``pi^2 / (4 epsilon^2)``."""
    return 4.0 / grid.hq**2 * math.sin(math.pi / (2.0 * (grid.nq + 1)))**2


def continuum_transverse_energy(epsilon: float) -> float:
    return math.pi**2 / (4.0 * epsilon**2)
