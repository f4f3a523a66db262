"""Weighted adjoints, the tube-weight conjugation, the normal momentum and its kernel.

A finite-dimensional function space is a :class:`WeightedSpace`: vectors paired by
``<u, v>_w = sum w u v``. The pairing map ``u -> w u`` takes a vector to its dual, and the
right-adjoint of ``A`` is ``W^{-1} A^T W``. Two weights matter on a tube grid:
``sqrt(det g_S) f`` (the euclidean volume) and ``sqrt(det g_S)`` (flat in ``q``). Conjugating
by ``f^{1/2}`` carries operators from the first to the second, where ``d/dq`` becomes
antisymmetric and averaging over ``q`` an orthogonal projection.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sparse

from squeezeqm.discretize import Grid3, Hamiltonian3D, SparseOperator, symmetry_defect

_logger = logging.getLogger(__name__)

DEFAULT_DEFECT_THRESHOLD = 1e-10
NORMAL_STENCILS = ('flux', 'potential')


class TransformError(ValueError):
    """An operator transformation received inconsistent inputs"""


@dataclass(frozen=True)
class WeightedSpace:
    weight: np.ndarray
    label: str = 'flat'

    def __post_init__(self):
        if np.any(self.weight <= 0):
            raise TransformError(f'{self.label} weights must be positive')

    @classmethod
    def tube(cls, h3d: Hamiltonian3D) -> 'WeightedSpace':
        return cls(h3d.operator.weight, 'tube')

    @classmethod
    def flat(cls, h3d: Hamiltonian3D) -> 'WeightedSpace':
        sqrt_g = h3d.grid.plane.interior(h3d.cache.geometry.sqrt_detgS).ravel()
        return cls(np.tile(sqrt_g, h3d.grid.nq), 'flat')

    @property
    def dimension(self) -> int:
        return self.weight.shape[0]

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.weight * np.conj(u) * v))

    def pair(self, u: np.ndarray) -> np.ndarray:
        """The dual of ``u`` as a vector: ``w u*``."""
        return self.weight * np.conj(u)

    def unpair(self, dual: np.ndarray) -> np.ndarray:
        return np.conj(dual / self.weight)


@dataclass(frozen=True)
class ConjugationMap:
    root: np.ndarray
    inverse_root: np.ndarray

    @classmethod
    def from_weight(cls, f: np.ndarray) -> 'ConjugationMap':
        if f is None or np.any(f <= 0):
            raise TransformError('the tube weight f must be available and positive at every node')
        root = np.sqrt(f)
        return cls(root, 1.0 / root)

    def forward(self, psi: np.ndarray) -> np.ndarray:
        return self.root * psi

    def backward(self, phi: np.ndarray) -> np.ndarray:
        return self.inverse_root * phi

    def conjugate(self, matrix: sparse.spmatrix) -> sparse.csr_matrix:
        """``f^{1/2} A f^{-1/2}``"""
        return (sparse.diags(self.root) @ matrix @ sparse.diags(self.inverse_root)).tocsr()


Operand = Union[SparseOperator, sparse.spmatrix]


def _matrix(operand: Operand) -> sparse.csr_matrix:
    return operand.matrix if isinstance(operand, SparseOperator) else sparse.csr_matrix(operand)


def weighted_adjoint(A: Operand, space: WeightedSpace) -> SparseOperator:
    """``W^{-1} A^T W``, the matrix with ``<A* u, v>_w = <u, A v>_w``."""
    matrix = _matrix(A)
    if matrix.shape != (space.dimension, space.dimension):
        raise TransformError(f'operator of shape {matrix.shape} does not act on a space of '
                             f'dimension {space.dimension}')
    adjoint = sparse.diags(1.0 / space.weight) @ matrix.T @ sparse.diags(space.weight)
    return SparseOperator(adjoint.tocsr(), space.weight)


def adjoint_defect(A: Operand, space: WeightedSpace) -> float:
    """``max |A* - A|``"""
    difference = weighted_adjoint(A, space).matrix - _matrix(A)
    return float(abs(difference).max()) if difference.nnz else 0.0


def antisymmetry_defect(A: Operand, space: WeightedSpace) -> float:
    """``max |W A + A^T W|``; zero when ``A`` is skew-adjoint in ``<,>_w``."""
    weighted = sparse.diags(space.weight) @ _matrix(A)
    total = (weighted + weighted.T).tocsr()
    return float(abs(total).max()) if total.nnz else 0.0


def _potential_form(h3d: Hamiltonian3D, conjugation: ConjugationMap) -> sparse.csr_matrix:
    """Conjugated s-fluxes plus ``-d_q^2 + V`` on the plain Dirichlet q-stencil."""
    if h3d.tangential is None or h3d.normal_potential is None:
        raise TransformError('the potential stencil needs the tangential part and normal potential '
                             'recorded by assemble_h3d')
    tangential = conjugation.conjugate(sparse.diags(1.0 / h3d.operator.weight) @ h3d.tangential)
    grid = h3d.grid
    second = sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(grid.nq, grid.nq)) / grid.hq**2
    return (tangential + _layer_operator(grid, second) + sparse.diags(h3d.normal_potential)).tocsr()


def selfadjointize(h3d: Hamiltonian3D, threshold: float = DEFAULT_DEFECT_THRESHOLD,
                   normal_stencil: str = 'flux') -> SparseOperator:
    """``L = f^{1/2} A f^{-1/2}``, self-adjoint in the flat-in-q pairing.

    With ``normal_stencil='flux'`` the conjugation is applied to the assembled matrix, so the
    q-fluxes of ``A`` carry their weighted three-point error into ``L``. ``'potential'``
    discretizes the conjugated q-part itself, ``-d_q^2 + V`` with ``V`` from
    :meth:`~squeezeqm.geometry.PointGeometry.normal_potential`; then the transverse ground
    mode sees the geometric potential without an error of order ``1 / nq^2``.
    """
    if normal_stencil not in NORMAL_STENCILS:
        raise TransformError(f'unknown normal stencil {normal_stencil!r}, expected one of '
                             f'{", ".join(NORMAL_STENCILS)}')
    conjugation = ConjugationMap.from_weight(h3d.f)
    flat = WeightedSpace.flat(h3d)
    if normal_stencil == 'potential':
        matrix = _potential_form(h3d, conjugation)
    else:
        matrix = conjugation.conjugate(h3d.operator.matrix)
    defect = symmetry_defect(matrix, flat.weight)
    _logger.debug('Self-adjointized %s tube operator: flat defect %.3g (before: %.3g)', h3d.surface,
                  defect, symmetry_defect(h3d.operator.matrix, flat.weight))
    if defect > threshold:
        raise TransformError(f'self-adjointized operator has flat-weighted symmetry defect '
                             f'{defect:.3g} > {threshold:.3g}')
    return SparseOperator(matrix, flat.weight, symmetry_defect=defect)


def _layer_operator(grid: Grid3, layer_matrix: sparse.spmatrix) -> sparse.csr_matrix:
    return sparse.kron(layer_matrix, sparse.identity(grid.plane.size), format='csr')


def normal_momentum(grid: Grid3) -> SparseOperator:
    """The centered difference ``D_q``; ``p_q = i D_q`` is kept real as ``D_q`` itself, whose
    skew-adjointness stands for self-adjointness of ``p_q``."""
    if grid.nq < 3:
        raise TransformError(f'the normal momentum needs at least 3 q-layers, got {grid.nq}')
    step = 1.0 / (2.0 * grid.hq)
    centered = sparse.diags([-step, step], [-1, 1], shape=(grid.nq, grid.nq))
    return SparseOperator(_layer_operator(grid, centered), np.ones(grid.size))


def position_q(grid: Grid3) -> SparseOperator:
    return SparseOperator(_layer_operator(grid, sparse.diags(grid.q_values)), np.ones(grid.size))


def canonical_commutator_defect(grid: Grid3) -> float:
    """``max |[D_q, Q] u - u|`` over rows not touching a wall, for ``u`` in {1, q}.

    On the grid ``[D_q, Q]`` is the nearest-layer average, which reproduces exactly the
    functions affine in ``q``."""
    D, Q = normal_momentum(grid).matrix, position_q(grid).matrix
    commutator = (D @ Q - Q @ D).tocsr()
    band = slice(grid.plane.size, (grid.nq - 1) * grid.plane.size)
    defect = 0.0
    for u in (np.ones(grid.size), np.repeat(grid.q_values, grid.plane.size)):
        defect = max(defect, float(np.max(np.abs((commutator @ u - u)[band]))))
    return defect


def kernel_projection(grid: Grid3, space: WeightedSpace) -> SparseOperator:
    """Averaging over the q-layers, replicated to every layer. The returned operator records
    ``max |Pi* - Pi|`` in ``space`` as its ``symmetry_defect``."""
    average = np.full((grid.nq, grid.nq), 1.0 / grid.nq)
    projection = _layer_operator(grid, sparse.csr_matrix(average))
    defect = adjoint_defect(projection, space)
    _logger.debug('Kernel projection adjoint defect in %s space: %.3g', space.label, defect)
    return SparseOperator(projection, space.weight, symmetry_defect=defect)


def _layer(grid: Grid3, layer: Optional[int]) -> int:
    if layer is None:
        if grid.center_layer is None:
            raise TransformError(f'nq = {grid.nq} is even, so no q-layer lies on the surface')
        return grid.center_layer
    if not 0 <= layer < grid.nq:
        raise TransformError(f'layer {layer} outside of 0 .. {grid.nq - 1}')
    return layer


def restricted_operator(L: SparseOperator, grid: Grid3, layer: Optional[int] = None) -> SparseOperator:
    """The 2D matrix of ``u -> (L embed(u))|_layer`` where ``embed`` replicates ``u`` over all
    q-layers; the default layer is ``q = 0``."""
    layer = _layer(grid, layer)
    size = grid.plane.size
    rows = L.matrix[layer * size:(layer + 1) * size, :]
    embedding = sparse.vstack([sparse.identity(size)] * grid.nq, format='csr')
    return SparseOperator((rows @ embedding).tocsr(), L.weight[layer * size:(layer + 1) * size])


def restrict_to_surface(L: SparseOperator, grid: Grid3, test: np.ndarray,
                        layer: Optional[int] = None) -> np.ndarray:
    layer = _layer(grid, layer)
    size = grid.plane.size
    if test.shape != (size, ):
        raise TransformError(f'test vector has shape {test.shape}, expected ({size},)')
    applied = L.matrix @ np.tile(test, grid.nq)
    return applied[layer * size:(layer + 1) * size]
