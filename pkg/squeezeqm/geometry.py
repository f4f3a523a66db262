"""Extrinsic geometry of parametric surfaces and of their tubular neighborhoods.

Sign conventions: ``e3 = e1 x e2 / |e1 x e2|``; the shape tensor ``gamma`` is defined by
``d_a e3 = gamma^b_a e_b`` and stored as a matrix indexed ``[b, a]``; the Weingarten map
is ``W = -gamma``, so ``H = -tr(gamma) / 2`` and ``K = det(gamma)``. With these the tube
weight reads ``f = det(I + q gamma) = 1 - 2Hq + Kq^2``.
"""
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from squeezeqm.dsl import Expr, eval_jet2, parse, validate_symbols
from squeezeqm.jet import Jet2, Real

_logger = logging.getLogger(__name__)

DEFAULT_IMMERSION_THRESHOLD = 1e-12


class GeometryError(ValueError):
    """A surface or tube could not be evaluated"""


class DegenerateImmersionError(GeometryError):
    def __init__(self, point: Tuple[float, float], norm: float):
        super().__init__(f'|e1 x e2| = {norm:.3g} at (s1, s2) = ({point[0]:.6g}, {point[1]:.6g}); '
                         'the map is not an immersion there')
        self.point = point
        self.norm = norm


class TubeValidityError(GeometryError):
    def __init__(self, q: float, admissible: float, point: Optional[Tuple[float, float]] = None):
        where = f' at (s1, s2) = ({point[0]:.6g}, {point[1]:.6g})' if point else ''
        super().__init__(f'tube weight f <= 0 for q = {q:.6g}{where}; '
                         f'the admissible half-width is |q| < {admissible:.6g}')
        self.q = q
        self.admissible = admissible
        self.point = point


@dataclass(frozen=True)
class SurfacePatch:
    """A map ``(s1, s2) -> E^3`` given by three coordinate expressions over the domain
    ``[0, L1] x [0, L2]``."""
    name: str
    coordinates: Tuple[Expr, Expr, Expr]
    lengths: Tuple[float, float]
    periodic: Tuple[bool, bool]
    params: Mapping[str, float] = field(default_factory=dict)
    immersion_threshold: float = DEFAULT_IMMERSION_THRESHOLD

    @classmethod
    def from_expressions(
        cls,
        x: str,
        y: str,
        z: str,
        lengths: Sequence[float],
        periodic: Sequence[bool],
        params: Optional[Mapping[str, float]] = None,
        name: str = 'custom',
        immersion_threshold: float = DEFAULT_IMMERSION_THRESHOLD,
    ) -> 'SurfacePatch':
        params = dict(params or {})
        coordinates = tuple(parse(text) for text in (x, y, z))
        for coordinate in coordinates:
            validate_symbols(coordinate, params.keys())
        if len(lengths) != 2 or any(length <= 0 for length in lengths):
            raise GeometryError(f'domain lengths must be two positive numbers, not {lengths}')
        return cls(
            name=name,
            coordinates=coordinates,  # type: ignore[arg-type]
            lengths=(float(lengths[0]), float(lengths[1])),
            periodic=(bool(periodic[0]), bool(periodic[1])),
            params=params,
            immersion_threshold=immersion_threshold,
        )

    def embed(self, s1: Real, s2: Real) -> Tuple[Jet2, Jet2, Jet2]:
        return tuple(  # type: ignore[return-value]
            eval_jet2(coordinate, s1, s2, self.params) for coordinate in self.coordinates
        )


@dataclass(frozen=True)
class PointGeometry:
    """Frame and curvature data at one point, or at every point of a grid when the
    fields are arrays (vector and matrix indices trail)."""
    s1: np.ndarray
    s2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    gS: np.ndarray
    gS_inv: np.ndarray
    sqrt_detgS: np.ndarray
    gamma: np.ndarray
    H: np.ndarray
    K: np.ndarray
    geo_pot: np.ndarray

    @property
    def trace_gamma(self) -> np.ndarray:
        return self.gamma[..., 0, 0] + self.gamma[..., 1, 1]

    @property
    def det_gamma(self) -> np.ndarray:
        return _det2(self.gamma)

    @property
    def max_abs_curvature(self) -> np.ndarray:
        """max(|k1|, |k2|) for the principal curvatures k = H +- sqrt(H^2 - K)."""
        return np.abs(self.H) + np.sqrt(np.maximum(self.geo_pot, 0.0))

    def weight(self, q: Real) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return 1.0 + q * self.trace_gamma + q * q * self.det_gamma

    def normal_potential(self, q: Real) -> np.ndarray:
        """``f''/(2f) - (f'/(2f))^2``: the potential ``f^{1/2} f^{-1} d_q f d_q f^{-1/2}`` leaves
        beside ``d_q^2``. It equals ``K - H^2`` on the surface."""
        q = np.asarray(q, dtype=float)
        f = self.weight(q)
        slope = self.trace_gamma + 2.0 * q * self.det_gamma
        return self.det_gamma / f - (0.5 * slope / f)**2


@dataclass(frozen=True)
class TubeGeometry:
    q: np.ndarray
    gSq: np.ndarray
    gTS_det: np.ndarray
    f: np.ndarray
    E_frame: np.ndarray


def _det2(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def _inv2(m: np.ndarray) -> np.ndarray:
    det = _det2(m)
    inverse = np.empty_like(m)
    inverse[..., 0, 0] = m[..., 1, 1] / det
    inverse[..., 1, 1] = m[..., 0, 0] / det
    inverse[..., 0, 1] = -m[..., 0, 1] / det
    inverse[..., 1, 0] = -m[..., 1, 0] / det
    return inverse


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum('...i,...i->...', a, b)


def surface_geometry(patch: SurfacePatch, s1: Real, s2: Real) -> PointGeometry:
    """Evaluate frames, metric and curvatures at every point of ``(s1, s2)``."""
    s1, s2 = np.broadcast_arrays(np.asarray(s1, dtype=float), np.asarray(s2, dtype=float))
    shape = s1.shape
    jets = patch.embed(s1, s2)

    def stack(slot: str) -> np.ndarray:
        return np.stack(
            [np.broadcast_to(np.asarray(getattr(jet, slot), dtype=float), shape) for jet in jets],
            axis=-1
        )

    e1, e2 = stack('d1'), stack('d2')
    x11, x12, x22 = stack('d11'), stack('d12'), stack('d22')

    normal = np.cross(e1, e2)
    norm = np.linalg.norm(normal, axis=-1)
    if np.any(norm <= patch.immersion_threshold):
        worst = np.unravel_index(np.argmin(norm), shape) if shape else ()
        raise DegenerateImmersionError((float(s1[worst]), float(s2[worst])), float(np.min(norm)))
    e3 = normal / norm[..., None]

    # d_a e3 from d_a (e1 x e2), projected off e3
    derivatives = []
    for d_e1, d_e2 in ((x11, x12), (x12, x22)):
        d_normal = np.cross(d_e1, e2) + np.cross(e1, d_e2)
        derivatives.append((d_normal - e3 * _dot(e3, d_normal)[..., None]) / norm[..., None])

    frame = (e1, e2)
    gS = np.empty(shape + (2, 2))
    B = np.empty(shape + (2, 2))
    for a in range(2):
        for b in range(2):
            gS[..., a, b] = _dot(frame[a], frame[b])
            B[..., a, b] = _dot(derivatives[a], frame[b])
    gS_inv = _inv2(gS)
    # B = gamma^T gS
    gamma = np.einsum('...ij,...kj->...ik', gS_inv, B)

    H = -0.5 * (gamma[..., 0, 0] + gamma[..., 1, 1])
    K = _det2(gamma)
    return PointGeometry(
        s1=s1,
        s2=s2,
        e1=e1,
        e2=e2,
        e3=e3,
        gS=gS,
        gS_inv=gS_inv,
        sqrt_detgS=np.sqrt(_det2(gS)),
        gamma=gamma,
        H=H,
        K=K,
        geo_pot=H * H - K,
    )


def point_geometry(patch: SurfacePatch, s1: float, s2: float) -> PointGeometry:
    for coordinate, length, periodic in zip((s1, s2), patch.lengths, patch.periodic):
        if not periodic and not -1e-12 <= coordinate <= length + 1e-12:
            raise GeometryError(f'({s1}, {s2}) lies outside of the domain {patch.lengths}')
    return surface_geometry(patch, float(s1), float(s2))


def max_admissible_epsilon(pg: PointGeometry) -> float:
    """The largest tube half-width keeping ``f > 0``: ``min 1 / max(|k1|, |k2|)``."""
    curvature = float(np.max(pg.max_abs_curvature))
    return float('inf') if curvature == 0 else 1.0 / curvature


def weight_roots(pg: PointGeometry) -> np.ndarray:
    """Smallest ``|q|`` solving ``1 + tr(gamma) q + det(gamma) q^2 = 0`` at every point
    (infinite where no real root exists)."""
    a, b = np.broadcast_arrays(pg.det_gamma, pg.trace_gamma)
    # gamma has real eigenvalues, so a negative discriminant is rounding
    discriminant = np.sqrt(np.maximum(b * b - 4.0 * a, 0.0))
    half = -0.5 * (b + np.copysign(discriminant, b))
    # the roots are 1 / half and half / a, which avoids cancellation for small a
    nonzero = half != 0
    with np.errstate(divide='ignore', invalid='ignore'):
        r1 = np.where(nonzero, np.abs(1.0 / np.where(nonzero, half, 1.0)), np.inf)
        quadratic = nonzero & (a != 0)
        r2 = np.where(quadratic, np.abs(half / np.where(quadratic, a, 1.0)), np.inf)
    return np.minimum(r1, r2)


def tube_metric(pg: PointGeometry, q: Real) -> TubeGeometry:
    """The metric of the parallel surface at normal offset ``q``."""
    q = np.asarray(q, dtype=float)
    f = pg.weight(q)
    if np.any(f <= 0):
        index = np.unravel_index(np.argmin(f), f.shape) if f.shape else ()
        offending = float(np.broadcast_to(q, f.shape)[index])
        point = (float(np.broadcast_to(pg.s1, f.shape)[index]),
                 float(np.broadcast_to(pg.s2, f.shape)[index]))
        raise TubeValidityError(offending, max_admissible_epsilon(pg), point)

    qm = q[..., None, None]
    gamma, gS = pg.gamma, pg.gS
    gamma_t = np.swapaxes(gamma, -1, -2)
    gSq = gS + qm * (gamma_t @ gS + gS @ gamma) + qm * qm * (gamma_t @ gS @ gamma)

    shift = np.eye(2) + qm * gamma
    tangent_frame = np.stack((pg.e1, pg.e2), axis=-1) @ shift
    e3 = np.broadcast_to(pg.e3, tangent_frame.shape[:-1])
    E_frame = np.concatenate((tangent_frame, e3[..., None]), axis=-1)
    return TubeGeometry(q=q, gSq=gSq, gTS_det=_det2(gSq), f=f, E_frame=E_frame)


def det_identity_residual(patch: SurfacePatch, s1: float, s2: float, q: float) -> float:
    """Relative residual of ``det g_TS = f^2 det g_S``, also measured against the Gram
    determinant of the moving frame; the larger of the two is returned."""
    pg = point_geometry(patch, s1, s2)
    tg = tube_metric(pg, q)
    expected = float(tg.f)**2 * float(_det2(pg.gS))
    gram = np.linalg.det(tg.E_frame.T @ tg.E_frame)
    residual = abs(float(tg.gTS_det) - expected) / expected
    cross_check = abs(float(gram) - float(tg.gTS_det)) / float(tg.gTS_det)
    _logger.debug('det identity at (%g, %g, q=%g): %.3g, frame Gram: %.3g', s1, s2, q, residual,
                  cross_check)
    return max(residual, cross_check)
