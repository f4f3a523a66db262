import math
from dataclasses import dataclass
from unittest import TestCase

import numpy as np

from squeezeqm.catalog import PRESETS, CatalogError, builtin, preset_schemas, spectral_oracle
from squeezeqm.geometry import point_geometry, surface_geometry


def _cell_centres(lengths, count: int = 12):
    axes = [length * (np.arange(count) + 0.5) / count for length in lengths]
    return np.meshgrid(*axes)


class TestGeometryOracles(TestCase):
    def test_jets_agree_with_closed_forms(self):
        for name in PRESETS:
            with self.subTest(surface=name):
                entry = builtin(name)
                s1, s2 = _cell_centres(entry.patch.lengths)
                computed = surface_geometry(entry.patch, s1, s2)
                oracle = entry.geometry_oracle(s1, s2)
                np.testing.assert_allclose(computed.gS, oracle.gS, rtol=1e-10, atol=1e-10)
                np.testing.assert_allclose(computed.H, oracle.H, rtol=1e-10, atol=1e-10)
                np.testing.assert_allclose(computed.K, oracle.K, rtol=1e-10, atol=1e-10)
                np.testing.assert_allclose(computed.geo_pot, oracle.geo_pot, rtol=1e-10, atol=1e-10)

    def test_point_values(self):
        @dataclass
        class SubTest:
            surface: str
            params: dict
            point: tuple
            H: float
            K: float
            geo_pot: float

        subtests = [
            SubTest('torus', {}, (0.0, math.pi), 0.0, -1.0, 1.0),
            SubTest('torus', {}, (1.0, 0.0), -2.0 / 3.0, 1.0 / 3.0, 1.0 / 9.0),
            SubTest('sphere', {'R': 2.0}, (1.0, 1.0), -0.5, 0.25, 0.0),
            SubTest('cylinder', {'R': 2.0}, (1.0, 1.0), -0.25, 0.0, 0.0625),
            SubTest('catenoid', {}, (1.0, 2.0), 0.0, -1.0, 1.0),
            SubTest('plane', {}, (1.0, 1.0), 0.0, 0.0, 0.0),
        ]
        for subtest in subtests:
            with self.subTest(subtest=subtest):
                pg = point_geometry(builtin(subtest.surface, subtest.params).patch, *subtest.point)
                assert math.isclose(float(pg.H), subtest.H, rel_tol=1e-12, abs_tol=1e-12)
                assert math.isclose(float(pg.K), subtest.K, rel_tol=1e-12, abs_tol=1e-12)
                assert math.isclose(float(pg.geo_pot), subtest.geo_pot, rel_tol=1e-12, abs_tol=1e-12)

    def test_minimal_surface(self):
        entry = builtin('catenoid', {'c': 0.5})
        s1, s2 = _cell_centres(entry.patch.lengths)
        computed = surface_geometry(entry.patch, s1, s2)
        assert float(np.max(np.abs(computed.H))) <= 1e-12
        np.testing.assert_allclose(computed.geo_pot, -computed.K, rtol=1e-12)


class TestBuiltin(TestCase):
    def test_parameters_override_defaults(self):
        entry = builtin('torus', {'R': 3})
        assert entry.params == {'R': 3.0, 'r': 1.0}
        assert entry.patch.periodic == (True, True)
        assert entry.spectral

    def test_errors(self):
        @dataclass
        class SubTest:
            name: str
            params: dict
            message: str

        subtests = [
            SubTest('klein', {}, 'unknown surface'),
            SubTest('torus', {'R': 1.0, 'r': 1.0}, '0 < r < R'),
            SubTest('torus', {'a': 1.0}, 'no parameter(s) a'),
            SubTest('sphere', {'R': -1.0}, 'must be positive'),
            SubTest('plane', {'L1': 0.0, 'L2': 0.0}, 'L1, L2'),
        ]
        for subtest in subtests:
            with self.subTest(subtest=subtest):
                with self.assertRaises(CatalogError) as raised:
                    builtin(subtest.name, subtest.params)
                assert subtest.message in str(raised.exception)

    def test_schemas(self):
        schemas = preset_schemas()
        assert set(schemas) == {'plane', 'cylinder', 'torus', 'sphere', 'catenoid', 'corrugated'}
        assert schemas['sphere']['spectral'] is False
        assert schemas['torus']['params'] == {'R': 2.0, 'r': 1.0}
        assert schemas['cylinder']['periodic'] == [True, False]


class TestSpectralOracle(TestCase):
    def test_continuum_levels(self):
        @dataclass
        class SubTest:
            surface: str
            params: dict
            count: int
            expected: list

        subtests = [
            SubTest('plane', {}, 3, [2.0, 5.0, 5.0]),
            SubTest('plane', {'L1': 2 * math.pi}, 2, [1.25, 2.0]),
            SubTest('cylinder', {}, 4, [0.75, 1.75, 1.75, 3.75]),
            SubTest('cylinder', {'R': 0.5}, 1, [0.0]),
        ]
        for subtest in subtests:
            with self.subTest(subtest=subtest):
                levels = spectral_oracle(builtin(subtest.surface, subtest.params), subtest.count)
                np.testing.assert_allclose(levels, subtest.expected, rtol=1e-14, atol=1e-14)

    def test_discrete_levels(self):
        h = math.pi / 8
        levels = spectral_oracle(builtin('plane'), 2, grid=(7, 7))
        first = 4.0 / h**2 * math.sin(h / 2)**2
        second = 4.0 / h**2 * math.sin(h)**2
        np.testing.assert_allclose(levels, [2 * first, first + second], rtol=1e-14)

    def test_refused(self):
        for name in ('torus', 'sphere', 'catenoid', 'corrugated'):
            with self.subTest(surface=name):
                with self.assertRaises(CatalogError):
                    spectral_oracle(builtin(name))
