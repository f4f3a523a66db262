"""Built-in surfaces with closed-form geometry and, where separable, spectral oracles.

Every preset is written in the expression language, so its geometry flows through the
same jet path as a user-defined surface; the oracles are independent closed forms.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from squeezeqm.geometry import SurfacePatch

_logger = logging.getLogger(__name__)


class CatalogError(ValueError):
    """A preset could not be built or does not support the request"""


@dataclass(frozen=True)
class GeometryOracle:
    gS: np.ndarray
    H: np.ndarray
    K: np.ndarray

    @property
    def geo_pot(self) -> np.ndarray:
        return self.H * self.H - self.K


OracleFunction = Callable[[Mapping[str, float], np.ndarray, np.ndarray], GeometryOracle]


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    params: Mapping[str, float]
    patch: SurfacePatch
    oracle: OracleFunction
    spectral: bool
    description: str

    def geometry_oracle(self, s1, s2) -> GeometryOracle:
        s1, s2 = np.broadcast_arrays(np.asarray(s1, dtype=float), np.asarray(s2, dtype=float))
        return self.oracle(self.params, s1, s2)


@dataclass(frozen=True)
class _Preset:
    name: str
    description: str
    defaults: Mapping[str, float]
    coordinates: Tuple[str, str, str]
    lengths: Callable[[Mapping[str, float]], Tuple[float, float]]
    periodic: Tuple[bool, bool]
    oracle: OracleFunction
    validate: Callable[[Mapping[str, float]], Optional[str]] = lambda p: None
    spectral: bool = True


def _diagonal_metric(g11: np.ndarray, g22: np.ndarray) -> np.ndarray:
    gS = np.zeros(np.shape(g11) + (2, 2))
    gS[..., 0, 0] = g11
    gS[..., 1, 1] = g22
    return gS


def _plane_oracle(p, s1, s2) -> GeometryOracle:
    zero = np.zeros_like(s1)
    return GeometryOracle(_diagonal_metric(zero + 1.0, zero + 1.0), zero, zero)


def _cylinder_oracle(p, s1, s2) -> GeometryOracle:
    R, zero = p['R'], np.zeros_like(s1)
    return GeometryOracle(_diagonal_metric(zero + R * R, zero + 1.0), zero - 0.5 / R, zero)


def _torus_oracle(p, s1, s2) -> GeometryOracle:
    R, r = p['R'], p['r']
    rho = R + r * np.cos(s2)
    return GeometryOracle(
        _diagonal_metric(rho * rho, np.full_like(s1, r * r)),
        -(R + 2.0 * r * np.cos(s2)) / (2.0 * r * rho),
        np.cos(s2) / (r * rho),
    )


def _sphere_oracle(p, s1, s2) -> GeometryOracle:
    R = p['R']
    return GeometryOracle(
        _diagonal_metric(np.full_like(s1, R * R), (R * np.sin(s1))**2),
        np.full_like(s1, -1.0 / R),
        np.full_like(s1, 1.0 / (R * R)),
    )


def _catenoid_oracle(p, s1, s2) -> GeometryOracle:
    c = p['c']
    ch = np.cosh((s1 - 0.5 * p['L1']) / c)
    return GeometryOracle(
        _diagonal_metric(ch * ch, (c * ch)**2),
        np.zeros_like(s1),
        -1.0 / (c * c * ch**4),
    )


def _corrugated_oracle(p, s1, s2) -> GeometryOracle:
    a, k = p['a'], p['k']
    slope = a * k * np.cos(k * s1)
    bend = -a * k * k * np.sin(k * s1)
    stretch = 1.0 + slope * slope
    return GeometryOracle(
        _diagonal_metric(stretch, np.ones_like(s1)),
        bend / (2.0 * stretch**1.5),
        np.zeros_like(s1),
    )


def _positive(*names: str) -> Callable[[Mapping[str, float]], Optional[str]]:
    def validate(p: Mapping[str, float]) -> Optional[str]:
        bad = [name for name in names if not p[name] > 0]
        return f'parameter(s) {", ".join(bad)} must be positive' if bad else None

    return validate


def _validate_torus(p: Mapping[str, float]) -> Optional[str]:
    if not 0 < p['r'] < p['R']:
        return f'torus requires 0 < r < R, got r={p["r"]}, R={p["R"]}'
    return None


_TWO_PI = 2.0 * math.pi

PRESETS: Dict[str, _Preset] = {
    preset.name: preset
    for preset in (
        _Preset(
            'plane', 'flat rectangle, Dirichlet x Dirichlet', {'L1': math.pi, 'L2': math.pi},
            ('s1', 's2', '0'), lambda p: (p['L1'], p['L2']), (False, False), _plane_oracle,
            _positive('L1', 'L2')
        ),
        _Preset(
            'cylinder', 'circular cylinder of radius R and length L, periodic x Dirichlet',
            {'R': 1.0, 'L': math.pi}, ('R*cos(s1)', 'R*sin(s1)', 's2'),
            lambda p: (_TWO_PI, p['L']), (True, False), _cylinder_oracle, _positive('R', 'L')
        ),
        _Preset(
            'torus', 'torus with radii R > r, periodic x periodic', {'R': 2.0, 'r': 1.0},
            ('(R + r*cos(s2))*cos(s1)', '(R + r*cos(s2))*sin(s1)', 'r*sin(s2)'),
            lambda p: (_TWO_PI, _TWO_PI), (True, True), _torus_oracle, _validate_torus
        ),
        _Preset(
            'sphere', 'sphere of radius R in polar coordinates (geometry only)', {'R': 1.0},
            ('R*sin(s1)*cos(s2)', 'R*sin(s1)*sin(s2)', 'R*cos(s1)'),
            lambda p: (math.pi, _TWO_PI), (False, True), _sphere_oracle, _positive('R'),
            spectral=False
        ),
        _Preset(
            'catenoid', 'catenoid of neck radius c over height L1, Dirichlet x periodic',
            {'c': 1.0, 'L1': 2.0},
            ('c*cosh((s1 - L1/2)/c)*cos(s2)', 'c*cosh((s1 - L1/2)/c)*sin(s2)', 's1 - L1/2'),
            lambda p: (p['L1'], _TWO_PI), (False, True), _catenoid_oracle, _positive('c', 'L1')
        ),
        # graphs are always immersions, whatever a and k
        _Preset(
            'corrugated', 'sheet z = a sin(k s1), Dirichlet x Dirichlet',
            {'a': 0.2, 'k': 2.0, 'L1': math.pi, 'L2': math.pi}, ('s1', 's2', 'a*sin(k*s1)'),
            lambda p: (p['L1'], p['L2']), (False, False), _corrugated_oracle,
            _positive('L1', 'L2')
        ),
    )
}


def builtin(name: str, params: Optional[Mapping[str, float]] = None) -> CatalogEntry:
    """Instantiate the preset ``name`` with ``params`` overriding its defaults."""
    preset = PRESETS.get(name)
    if preset is None:
        raise CatalogError(f'unknown surface {name!r}; choose one of {", ".join(PRESETS)}')
    params = dict(params or {})
    unknown = set(params) - set(preset.defaults)
    if unknown:
        raise CatalogError(f'{name} has no parameter(s) {", ".join(sorted(unknown))}')
    resolved = {**preset.defaults, **{key: float(value) for key, value in params.items()}}
    problem = preset.validate(resolved)
    if problem:
        raise CatalogError(problem)
    patch = SurfacePatch.from_expressions(
        *preset.coordinates,
        lengths=preset.lengths(resolved),
        periodic=preset.periodic,
        params=resolved,
        name=name,
    )
    _logger.debug('Built preset %s with %s', name, resolved)
    return CatalogEntry(name, resolved, patch, preset.oracle, preset.spectral, preset.description)


def preset_schemas() -> Dict[str, Dict[str, object]]:
    return {
        name: {'description': preset.description, 'params': dict(preset.defaults),
               'periodic': list(preset.periodic), 'spectral': preset.spectral}
        for name, preset in PRESETS.items()
    }


def _dirichlet_levels(length: float, count: int, n: Optional[int]) -> List[float]:
    if n is None:
        return [(m * math.pi / length)**2 for m in range(1, count + 1)]
    h = length / (n + 1)
    return [(4.0 / h**2) * math.sin(m * math.pi * h / (2.0 * length))**2
            for m in range(1, min(count, n) + 1)]


def spectral_oracle(entry: CatalogEntry, count: int = 6,
                    grid: Optional[Tuple[int, int]] = None) -> List[float]:
    """The ``count`` smallest eigenvalues of ``-Delta_S - (H^2 - K)``, continuum values or,
    with ``grid = (n1, n2)``, the exact values of the discrete operator on that grid."""
    n1, n2 = grid if grid else (None, None)
    if entry.name == 'plane':
        first = _dirichlet_levels(entry.params['L1'], count, n1)
        second = _dirichlet_levels(entry.params['L2'], count, n2)
        levels = [a + b for a, b in itertools.product(first, second)]
    elif entry.name == 'cylinder':
        R, length = entry.params['R'], entry.params['L']
        if n1 is None:
            ring = [0.0] + [(m / R)**2 for m in range(1, count + 1) for _ in range(2)]
        else:
            h = _TWO_PI / n1
            ring = sorted((4.0 / (h * R)**2) * math.sin(m * h / 2.0)**2 for m in range(n1))
        axial = _dirichlet_levels(length, count, n2)
        levels = [a + b - 0.25 / R**2 for a, b in itertools.product(ring[:2 * count + 1], axial)]
    else:
        raise CatalogError(f'no spectral oracle for {entry.name}')
    return sorted(levels)[:count]
