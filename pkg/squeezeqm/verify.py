"""The verification battery behind ``squeezeqm verify``.

Every check returns a :class:`~squeezeqm.config.CheckRecord` with the measured value and
the threshold it was held to; :func:`run_checks` collects them for one surface.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from squeezeqm.catalog import CatalogEntry
from squeezeqm.config import CheckRecord, JobConfig, VerifyConfig
from squeezeqm.discretize import Grid2, Grid3, assemble_h2d, assemble_h3d, symmetry_defect
from squeezeqm.dsl import eval_jet2, parse, validate_symbols
from squeezeqm.geometry import (
    SurfacePatch, det_identity_residual, max_admissible_epsilon, point_geometry,
    surface_geometry, tube_metric, weight_roots
)
from squeezeqm.transform import (
    ConjugationMap, WeightedSpace, antisymmetry_defect, canonical_commutator_defect,
    kernel_projection, normal_momentum, restrict_to_surface, selfadjointize
)

_logger = logging.getLogger(__name__)

DET_IDENTITY_TOLERANCE = 1e-10
ORACLE_TOLERANCE = 1e-10
EXACT_TOLERANCE = 1e-12
IDEMPOTENCE_TOLERANCE = 1e-14
MINIMUM_SAMPLE_WEIGHT = 0.2
ORACLE_SAMPLES = 12


class VerificationError(RuntimeError):
    def __init__(self, failures: Sequence[CheckRecord], *args):
        super().__init__(*args or (f'{len(failures)} check(s) failed: '
                                   f'{", ".join(record.name for record in failures)}', ))
        self.failures = list(failures)


def _record(name: str, value: float, threshold: Optional[float], passed: Optional[bool] = None,
            **detail) -> CheckRecord:
    if passed is None:
        passed = bool(value <= threshold)  # type: ignore[operator]
    record = CheckRecord(name=name, passed=passed, value=float(value), threshold=threshold,
                         detail=detail)
    _logger.info('%s %s: %.6g%s', 'PASS' if passed else 'FAIL', name, value,
                 f' (threshold {threshold:.3g})' if threshold is not None else '')
    return record


def _sample_parameters(patch: SurfacePatch, rng: np.random.Generator) -> Tuple[float, float]:
    point = []
    for length, periodic in zip(patch.lengths, patch.periodic):
        point.append(rng.uniform(0.0, length) if periodic else rng.uniform(0.02 * length, 0.98 * length))
    return point[0], point[1]


def check_det_identity(patch: SurfacePatch, samples: int, seed: int) -> CheckRecord:
    """``det g_Sq = f^2 det g_S`` at random ``(s, q)`` with ``f > 0.2``. The deviation from the
    unsquared relation ``det g_Sq = f det g_S`` is reported alongside."""
    rng = np.random.default_rng(seed)
    worst, unsquared, accepted = 0.0, 0.0, 0
    while accepted < samples:
        s1, s2 = _sample_parameters(patch, rng)
        pg = point_geometry(patch, s1, s2)
        bound = min(1.0, float(weight_roots(pg)))
        q = rng.uniform(-bound, bound)
        f = float(pg.weight(q))
        if f <= MINIMUM_SAMPLE_WEIGHT:
            continue
        accepted += 1
        worst = max(worst, det_identity_residual(patch, s1, s2, q))
        ratio = float(tube_metric(pg, q).gTS_det) / float(np.linalg.det(pg.gS))
        unsquared = max(unsquared, abs(ratio - f) / f)
    return _record('det_identity', worst, DET_IDENTITY_TOLERANCE, samples=samples,
                   unsquared_weight_deviation=unsquared)


def _oracle_sample(patch: SurfacePatch) -> Tuple[np.ndarray, np.ndarray]:
    axes = [length * (np.arange(ORACLE_SAMPLES) + 0.5) / ORACLE_SAMPLES for length in patch.lengths]
    s2, s1 = np.meshgrid(axes[1], axes[0], indexing='ij')
    return s1, s2


def _relative_error(computed: np.ndarray, expected: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(expected))), 1.0)
    return float(np.max(np.abs(computed - expected)) / scale)


def check_curvature_oracle(entry: CatalogEntry) -> CheckRecord:
    s1, s2 = _oracle_sample(entry.patch)
    geometry = surface_geometry(entry.patch, s1, s2)
    oracle = entry.geometry_oracle(s1, s2)
    errors = {
        'gS': _relative_error(geometry.gS, oracle.gS),
        'H': _relative_error(geometry.H, oracle.H),
        'K': _relative_error(geometry.K, oracle.K),
        'geo_pot': _relative_error(geometry.geo_pot, oracle.geo_pot),
    }
    return _record('curvature_oracle', max(errors.values()), ORACLE_TOLERANCE, **errors)


def check_geometric_potential_sign(patch: SurfacePatch) -> CheckRecord:
    s1, s2 = _oracle_sample(patch)
    lowest = float(np.min(surface_geometry(patch, s1, s2).geo_pot))
    return _record('geometric_potential_sign', -lowest, EXACT_TOLERANCE, minimum=lowest)


def check_tube_validity(patch: SurfacePatch) -> CheckRecord:
    """The admissible half-width from principal curvatures against the roots of ``f``."""
    s1, s2 = _oracle_sample(patch)
    geometry = surface_geometry(patch, s1, s2)
    admissible = max_admissible_epsilon(geometry)
    root = float(np.min(weight_roots(geometry)))
    if np.isinf(admissible) and np.isinf(root):
        return _record('tube_validity', 0.0, ORACLE_TOLERANCE, admissible=None)
    return _record('tube_validity', abs(admissible - root) / root, ORACLE_TOLERANCE,
                   admissible=admissible, smallest_root=root)


def _curved(h3d) -> bool:
    return bool(np.max(np.abs(h3d.f - 1.0)) > 0)


def check_operator_defects(patch: SurfacePatch, grid: Grid3) -> List[CheckRecord]:
    h2d = assemble_h2d(patch, grid.plane)
    h3d = assemble_h3d(patch, grid)
    tube, flat = WeightedSpace.tube(h3d), WeightedSpace.flat(h3d)
    curved = _curved(h3d)
    records = [
        _record('h2d_symmetry', symmetry_defect(h2d.operator.matrix, h2d.operator.weight),
                EXACT_TOLERANCE),
        _record('h3d_symmetry', symmetry_defect(h3d.operator.matrix, tube.weight), EXACT_TOLERANCE),
    ]

    L = selfadjointize(h3d)
    opposite = ConjugationMap.from_weight(1.0 / h3d.f).conjugate(h3d.operator.matrix)
    records.append(
        _record('selfadjointized_flat_symmetry', L.symmetry_defect, EXACT_TOLERANCE,
                unconjugated_flat_defect=symmetry_defect(h3d.operator.matrix, flat.weight),
                opposite_direction_flat_defect=symmetry_defect(opposite, flat.weight))
    )

    D = normal_momentum(grid)
    flat_antisymmetry = antisymmetry_defect(D, flat)
    tube_antisymmetry = antisymmetry_defect(D, tube)
    records.append(_record('normal_momentum_flat_antisymmetry', flat_antisymmetry, EXACT_TOLERANCE))
    records.append(
        _record('normal_momentum_tube_antisymmetry', tube_antisymmetry, None,
                passed=(tube_antisymmetry > 0) == curved, curved=curved)
    )
    records.append(_record('canonical_commutator', canonical_commutator_defect(grid), EXACT_TOLERANCE))

    flat_projection = kernel_projection(grid, flat)
    square = (flat_projection.matrix @ flat_projection.matrix - flat_projection.matrix).tocsr()
    records.append(
        _record('projection_idempotence', float(abs(square).max()) if square.nnz else 0.0,
                IDEMPOTENCE_TOLERANCE)
    )
    records.append(_record('projection_flat_adjoint', flat_projection.symmetry_defect, EXACT_TOLERANCE))
    tube_defect = kernel_projection(grid, tube).symmetry_defect
    records.append(
        _record('projection_tube_adjoint', tube_defect, None, passed=(tube_defect > 0) == curved,
                curved=curved)
    )
    return records


def restriction_residual(patch: SurfacePatch, n: int, nq: int, epsilon: float,
                         test: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
    """``max |restrict(L, u) - H2D u|`` for ``u`` sampled from ``test`` on an ``n x n`` grid."""
    plane = Grid2.for_patch(patch, n, n)
    grid = Grid3(plane, nq, epsilon)
    h2d = assemble_h2d(patch, plane)
    L = selfadjointize(assemble_h3d(patch, grid))
    s1, s2 = plane.coordinates()
    u = np.asarray(test(s1, s2), dtype=float).ravel()
    residual = restrict_to_surface(L, grid, u) - h2d.operator @ u
    return float(np.max(np.abs(residual)))


def check_restriction(patch: SurfacePatch, settings: VerifyConfig) -> CheckRecord:
    expression = parse(settings.test_function)
    validate_symbols(expression, patch.params.keys())

    def test(s1, s2):
        return eval_jet2(expression, s1, s2, patch.params).v

    residuals = [
        restriction_residual(patch, n, nq, settings.epsilon, test) for n, nq in settings.refinements
    ]
    low, high = settings.ratio_bounds
    # rounding in the restricted rows grows with the q-stencil entries, 1 / hq^2
    nq = settings.refinements[0][1]
    stencil = max(1.0, ((nq + 1) / (2.0 * settings.epsilon))**2)
    if residuals[0] <= EXACT_TOLERANCE * stencil:
        return _record('restriction_convergence', residuals[0] / stencil, EXACT_TOLERANCE,
                       residuals=residuals, ratio=None)
    ratio = residuals[0] / residuals[1] if residuals[1] > 0 else float('inf')
    return _record('restriction_convergence', ratio, None, passed=low <= ratio <= high,
                   residuals=residuals, ratio_bounds=[low, high])


def run_checks(patch: SurfacePatch, config: JobConfig,
               entry: Optional[CatalogEntry] = None) -> List[CheckRecord]:
    """All checks applicable to ``patch``; operator checks need a surface whose grid
    geometry is regular, so they are skipped for geometry-only presets."""
    settings = config.verify
    records = [
        check_det_identity(patch, settings.samples, settings.seed),
        check_geometric_potential_sign(patch),
        check_tube_validity(patch),
    ]
    if entry is not None:
        records.append(check_curvature_oracle(entry))
    if entry is not None and not entry.spectral:
        _logger.warning('%s is a geometry-only surface; operator checks are skipped.', entry.name)
        return records

    plane = Grid2.for_patch(patch, config.grid.n1, config.grid.n2)
    records.extend(check_operator_defects(patch, Grid3(plane, config.tube.nq, config.tube.epsilon)))
    records.append(check_restriction(patch, settings))
    return records
