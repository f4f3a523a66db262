import math
from dataclasses import dataclass, replace
from unittest import TestCase

import numpy as np
import scipy.linalg
import scipy.sparse as sparse

from squeezeqm.catalog import builtin
from squeezeqm.discretize import Grid2, Grid3, assemble_h2d, assemble_h3d, symmetrize, symmetry_defect
from squeezeqm.transform import (
    ConjugationMap, TransformError, WeightedSpace, adjoint_defect, antisymmetry_defect,
    canonical_commutator_defect, kernel_projection, normal_momentum, position_q, restrict_to_surface,
    restricted_operator, selfadjointize, weighted_adjoint
)


def _tube(name: str, epsilon: float, n=(8, 6), nq: int = 5):
    entry = builtin(name)
    grid = Grid3(Grid2.for_patch(entry.patch, *n), nq, epsilon)
    return assemble_h3d(entry.patch, grid)


class TestWeightedAdjoint(TestCase):
    def test_example(self):
        space = WeightedSpace(np.array([1.0, 2.0]))
        A = sparse.csr_matrix(np.array([[1.0, 2.0], [3.0, 4.0]]))
        adjoint = weighted_adjoint(A, space)
        np.testing.assert_allclose(adjoint.matrix.toarray(), [[1.0, 6.0], [1.0, 4.0]])
        u, v = np.array([0.3, -1.2]), np.array([2.0, 0.7])
        assert np.isclose(space.inner(adjoint @ u, v), space.inner(u, A @ v), rtol=1e-14)
        assert adjoint_defect(A, space) == 4.0

    def test_involution_and_product_reversal(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            with self.subTest(trial=trial):
                n = int(rng.integers(2, 40))
                space = WeightedSpace(rng.uniform(0.5, 2.0, size=n))
                A, B = (
                    sparse.random(n, n, density=0.3, format='csr', random_state=rng,
                                  data_rvs=rng.standard_normal) for _ in range(2)
                )
                adjoint = weighted_adjoint(A, space)
                twice = weighted_adjoint(adjoint, space).matrix
                assert abs(twice - A).max() <= 1e-12
                product = weighted_adjoint(A @ B, space).matrix
                reversed_product = weighted_adjoint(B, space).matrix @ adjoint.matrix
                assert abs(product - reversed_product).max() <= 1e-12 * max(1.0, abs(product).max())
                u, v = rng.normal(size=(2, n))
                scale = math.sqrt(space.inner(u, u) * space.inner(v, v)) * max(1.0, abs(A).max())
                assert abs(space.inner(adjoint @ u, v) - space.inner(u, A @ v)) <= 1e-12 * scale

    def test_invalid(self):
        with self.assertRaises(TransformError):
            WeightedSpace(np.array([1.0, 0.0]))
        with self.assertRaises(TransformError):
            weighted_adjoint(sparse.identity(3), WeightedSpace(np.ones(2)))

    def test_pairing(self):
        space = WeightedSpace(np.array([2.0, 0.5]))
        u = np.array([1.0 + 2.0j, -3.0])
        np.testing.assert_allclose(space.pair(u), [2.0 - 4.0j, -1.5])
        np.testing.assert_allclose(space.unpair(space.pair(u)), u)


class TestConjugation(TestCase):
    def test_round_trip(self):
        conjugation = ConjugationMap.from_weight(np.array([0.25, 1.0, 4.0]))
        np.testing.assert_allclose(conjugation.forward(np.ones(3)), [0.5, 1.0, 2.0])
        psi = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(conjugation.backward(conjugation.forward(psi)), psi)

    def test_rejects_nonpositive_weight(self):
        with self.assertRaises(TransformError):
            ConjugationMap.from_weight(np.array([1.0, -0.1]))

    def test_flat_tube_is_unchanged(self):
        h3d = _tube('plane', 0.2)
        L = selfadjointize(h3d)
        assert abs(L.matrix - h3d.operator.matrix).max() == 0.0
        assert L.symmetry_defect <= 1e-14

    def test_curved_tubes_become_flat_symmetric(self):
        @dataclass
        class SubTest:
            surface: str
            epsilon: float

        subtests = [SubTest('cylinder', 0.2), SubTest('torus', 0.3), SubTest('catenoid', 0.2)]
        for subtest in subtests:
            with self.subTest(subtest=subtest):
                h3d = _tube(subtest.surface, subtest.epsilon)
                flat = WeightedSpace.flat(h3d)
                L = selfadjointize(h3d)
                assert symmetry_defect(L.matrix, flat.weight) <= 1e-10
                assert symmetry_defect(h3d.operator.matrix, flat.weight) >= 1e-3
                np.testing.assert_array_equal(L.weight, flat.weight)

    def test_threshold(self):
        with self.assertRaises(TransformError):
            selfadjointize(_tube('torus', 0.3), threshold=-1.0)

    def test_adjoint_shares_the_ground_state(self):
        for name in ('torus', 'catenoid'):
            with self.subTest(surface=name):
                h3d = _tube(name, 0.2)
                L = selfadjointize(h3d)
                adjoint = weighted_adjoint(L, WeightedSpace.flat(h3d))
                grounds = [np.linalg.eigh(symmetrize(op).matrix.toarray())[1][:, :1] for op in (L, adjoint)]
                assert scipy.linalg.subspace_angles(*grounds)[0] <= 1e-8


class TestNormalMomentum(TestCase):
    def test_skew_adjoint_only_in_the_flat_pairing(self):
        h3d = _tube('torus', 0.3)
        D = normal_momentum(h3d.grid)
        assert antisymmetry_defect(D, WeightedSpace.flat(h3d)) == 0.0
        assert antisymmetry_defect(D, WeightedSpace.tube(h3d)) >= 1e-3

    def test_canonical_commutator(self):
        for nq in (3, 5, 9):
            with self.subTest(nq=nq):
                grid = Grid3(Grid2(4, 3, (1.0, 1.0), (True, False)), nq, 0.1)
                assert canonical_commutator_defect(grid) <= 1e-12

    def test_position(self):
        grid = Grid3(Grid2(3, 3, (1.0, 1.0), (False, False)), 3, 0.2)
        Q = position_q(grid)
        np.testing.assert_allclose(Q.matrix.diagonal(), np.repeat([-0.1, 0.0, 0.1], 9), atol=1e-15)

    def test_too_few_layers(self):
        with self.assertRaises(TransformError):
            normal_momentum(Grid3(Grid2(3, 3, (1.0, 1.0), (False, False)), 2, 0.2))


class TestKernelProjection(TestCase):
    def test_orthogonal_projection_in_the_flat_pairing(self):
        h3d = _tube('torus', 0.1)
        grid = h3d.grid
        flat = kernel_projection(grid, WeightedSpace.flat(h3d))
        tube = kernel_projection(grid, WeightedSpace.tube(h3d))
        Pi = flat.matrix
        assert abs(Pi @ Pi - Pi).max() <= 1e-14
        assert flat.symmetry_defect <= 1e-12
        assert tube.symmetry_defect > 0

    def test_fixes_functions_constant_in_q(self):
        grid = Grid3(Grid2(4, 5, (1.0, 1.0), (False, True)), 7, 0.1)
        Pi = kernel_projection(grid, WeightedSpace(np.ones(grid.size))).matrix
        rng = np.random.default_rng(3)
        u = np.tile(rng.normal(size=grid.plane.size), grid.nq)
        np.testing.assert_allclose(Pi @ u, u, rtol=1e-14, atol=1e-14)
        # D_q annihilates the constants away from the walls
        band = slice(grid.plane.size, (grid.nq - 1) * grid.plane.size)
        np.testing.assert_allclose((normal_momentum(grid) @ u)[band], 0.0, atol=1e-12)


class TestRestriction(TestCase):
    def test_flat_slab_restricts_to_the_surface_laplacian(self):
        entry = builtin('plane')
        plane = Grid2.for_patch(entry.patch, 7, 6)
        h3d = assemble_h3d(entry.patch, Grid3(plane, 5, 0.2))
        restricted = restricted_operator(selfadjointize(h3d), h3d.grid)
        surface = assemble_h2d(entry.patch, plane).operator.matrix
        assert abs(restricted.matrix - surface).max() <= 1e-12 * abs(surface).max()

    def test_matrix_agrees_with_direct_application(self):
        h3d = _tube('torus', 0.2)
        L = selfadjointize(h3d)
        test = np.random.default_rng(11).normal(size=h3d.grid.plane.size)
        for layer in (None, 0, 3):
            with self.subTest(layer=layer):
                direct = restrict_to_surface(L, h3d.grid, test, layer)
                np.testing.assert_allclose(restricted_operator(L, h3d.grid, layer) @ test, direct,
                                           rtol=1e-12, atol=1e-10)

    def test_invalid(self):
        h3d = _tube('torus', 0.2)
        L = selfadjointize(h3d)
        even = Grid3(h3d.grid.plane, 4, 0.2)
        with self.assertRaises(TransformError):
            restricted_operator(L, even)
        with self.assertRaises(TransformError):
            restricted_operator(L, h3d.grid, layer=5)
        with self.assertRaises(TransformError):
            restrict_to_surface(L, h3d.grid, np.ones(3))


class TestPotentialStencil(TestCase):
    def test_flat_symmetric(self):
        @dataclass
        class SubTest:
            surface: str
            epsilon: float

        subtests = [SubTest('cylinder', 0.2), SubTest('torus', 0.3), SubTest('catenoid', 0.2)]
        for subtest in subtests:
            with self.subTest(subtest=subtest):
                h3d = _tube(subtest.surface, subtest.epsilon)
                L = selfadjointize(h3d, normal_stencil='potential')
                assert symmetry_defect(L.matrix, WeightedSpace.flat(h3d).weight) <= 1e-10
                np.testing.assert_array_equal(L.weight, WeightedSpace.flat(h3d).weight)

    def test_flat_tube_matches_flux_form(self):
        h3d = _tube('plane', 0.2)
        potential = selfadjointize(h3d, normal_stencil='potential').matrix
        flux = selfadjointize(h3d, normal_stencil='flux').matrix
        assert abs(potential - flux).max() <= 1e-12 * abs(flux).max()

    def test_restricts_exactly_to_the_surface_hamiltonian(self):
        entry = builtin('torus')
        plane = Grid2.for_patch(entry.patch, 10, 8)
        h3d = assemble_h3d(entry.patch, Grid3(plane, 9, 0.2))
        restricted = restricted_operator(selfadjointize(h3d, normal_stencil='potential'), h3d.grid)
        surface = assemble_h2d(entry.patch, plane).operator.matrix
        assert abs(restricted.matrix - surface).max() <= 1e-10 * abs(surface).max()

    def test_invalid(self):
        h3d = _tube('torus', 0.2)
        with self.assertRaises(TransformError):
            selfadjointize(h3d, normal_stencil='spectral')
        with self.assertRaises(TransformError):
            selfadjointize(replace(h3d, tangential=None), normal_stencil='potential')
