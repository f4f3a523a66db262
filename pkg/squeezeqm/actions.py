import json
import logging
import math
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

import numpy as np

from squeezeqm import SqueezeJob
from squeezeqm._io import CsvTable
from squeezeqm.catalog import CatalogError, preset_schemas, spectral_oracle
from squeezeqm.config import JobConfig
from squeezeqm.discretize import (
    Grid3, assemble_h2d, assemble_h3d, continuum_transverse_energy, transverse_ground_energy
)
from squeezeqm.eigen import ConvergenceError, SolverError, Spectrum, residual_report
from squeezeqm.geometry import GeometryError, max_admissible_epsilon, surface_geometry
from squeezeqm.transform import TransformError, restricted_operator, selfadjointize
from squeezeqm.verify import VerificationError, run_checks


def _finite(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def _spectrum_results(spectrum: Spectrum) -> Dict[str, Any]:
    return {
        'eigenvalues': spectrum.eigenvalues.tolist(),
        'residuals': spectrum.residuals.tolist(),
        'iterations': spectrum.iterations,
        'seed': spectrum.seed,
        'norm_estimate': spectrum.norm_estimate,
    }


def _grid3_metadata(grid: Grid3) -> Dict[str, Any]:
    return {'n1': grid.plane.n1, 'n2': grid.plane.n2, 'nq': grid.nq, 'epsilon': grid.epsilon}


class Action(ABC):
    name: str
    description: str
    requires_config: bool = True

    def __init__(self, job: Optional[SqueezeJob]):
        self._logger = logging.getLogger(
            '.'.join((self.__class__.__module__, self.__class__.__name__))
        )
        self._job = job

    @property
    def job(self) -> SqueezeJob:
        if self._job is None:
            raise RuntimeError(f'{self.name} needs a job configuration')
        return self._job

    @abstractmethod
    def __call__(self, argument_parser, arguments) -> bool:
        ...


class GeometryAction(Action):
    name: str = 'geometry'
    description: str = 'tabulate curvatures and the geometric potential on the grid'

    def __call__(self, argument_parser, arguments) -> bool:
        grid = self.job.grid2()
        s1, s2 = grid.coordinates()
        geometry = surface_geometry(self.job.patch, s1, s2)

        table = CsvTable(('s1', 's2', 'H', 'K', 'geo_pot', 'sqrt_detg'))
        columns = [
            field.ravel()
            for field in (s1, s2, geometry.H, geometry.K, geometry.geo_pot, geometry.sqrt_detgS)
        ]
        for row in zip(*columns):
            table.append(*row)
        self.job.write_table('geometry.csv', table)

        summary = {
            'surface': self.job.patch.name,
            'points': grid.size,
            'H': [float(np.min(geometry.H)), float(np.max(geometry.H))],
            'K': [float(np.min(geometry.K)), float(np.max(geometry.K))],
            'geo_pot': [float(np.min(geometry.geo_pot)), float(np.max(geometry.geo_pot))],
            'max_abs_curvature': float(np.max(geometry.max_abs_curvature)),
            'max_admissible_epsilon': _finite(max_admissible_epsilon(geometry)),
        }
        self.job.write_report(self.name, summary)
        self._logger.info('%s', json.dumps(summary, indent=2))
        return True


class Spectrum2DAction(Action):
    name: str = 'spectrum2d'
    description: str = 'lowest eigenvalues of -Delta_S - (H^2 - K)'

    def __call__(self, argument_parser, arguments) -> bool:
        self.job.require_spectral()
        grid = self.job.grid2()
        h2d = assemble_h2d(self.job.patch, grid)
        self.job.dump(self.name, h2d.operator, {'n1': grid.n1, 'n2': grid.n2})
        spectrum = self.job.solve(h2d.operator)

        table = CsvTable(('index', 'eigenvalue', 'residual'))
        for row in residual_report(h2d.operator, spectrum):
            table.append(row.index, row.eigenvalue, row.stored_residual)
        self.job.write_table('spectrum2d.csv', table)

        results = _spectrum_results(spectrum)
        entry = self.job.entry
        if entry is not None:
            try:
                results['oracle'] = spectral_oracle(entry, len(spectrum.eigenvalues))
                results['discrete_oracle'] = spectral_oracle(entry, len(spectrum.eigenvalues),
                                                             grid=(grid.n1, grid.n2))
            except CatalogError:
                self._logger.debug('No spectral oracle for %s', entry.name)
        self.job.write_report(self.name, results)
        for index, value in enumerate(spectrum.eigenvalues):
            self._logger.info('E%d = %.12g', index, value)
        return True


class Spectrum3DAction(Action):
    name: str = 'spectrum3d'
    description: str = 'lowest eigenvalues of the Dirichlet Laplacian on the tube'

    def __call__(self, argument_parser, arguments) -> bool:
        self.job.require_spectral()
        grid = self.job.grid3()
        L = selfadjointize(assemble_h3d(self.job.patch, grid),
                           normal_stencil=self.job.config.tube.normal_stencil)
        self.job.dump(self.name, L, _grid3_metadata(grid))
        spectrum = self.job.solve(L, exclude_constant=False)
        transverse = transverse_ground_energy(grid)

        table = CsvTable(('index', 'eigenvalue', 'eigenvalue_minus_transverse', 'residual'))
        for index, (value, residual) in enumerate(zip(spectrum.eigenvalues, spectrum.residuals)):
            table.append(index, value, value - transverse, residual)
        self.job.write_table('spectrum3d.csv', table)

        # the q-averaged operator read off one layer acts on surface functions
        layer = self.job.config.tube.layer
        restricted = restricted_operator(L, grid, layer)
        restricted_spectrum = self.job.solve(restricted)
        layer = grid.center_layer if layer is None else layer

        results = _spectrum_results(spectrum)
        results.update(
            transverse_energy=transverse,
            continuum_transverse_energy=continuum_transverse_energy(grid.epsilon),
            normal_stencil=self.job.config.tube.normal_stencil,
            restricted={
                'layer': layer,
                'q': float(grid.q_values[layer]),
                'eigenvalues': restricted_spectrum.eigenvalues.tolist(),
                'residuals': restricted_spectrum.residuals.tolist(),
            },
        )
        self.job.write_report(self.name, results)
        return True


class SqueezeAction(Action):
    name: str = 'squeeze'
    description: str = 'compare tube spectra with the surface spectrum as the tube narrows'

    def __call__(self, argument_parser, arguments) -> bool:
        self.job.require_spectral()
        h2d = assemble_h2d(self.job.patch, self.job.grid2())
        surface = self.job.solve(h2d.operator).eigenvalues

        table = CsvTable(('epsilon', 'i', 'E3d', 'E3d_minus_transverse', 'E2d', 'gap'))
        runs: List[Dict[str, Any]] = []
        failures: List[Exception] = []
        for epsilon in self.job.config.tube.epsilons:
            grid = self.job.grid3(epsilon)
            try:
                L = selfadjointize(assemble_h3d(self.job.patch, grid),
                                   normal_stencil=self.job.config.tube.normal_stencil)
                spectrum = self.job.solve(L, exclude_constant=False)
            except (GeometryError, TransformError, SolverError, ConvergenceError) as e:
                self._logger.error('epsilon = %g failed: %s', epsilon, e)
                self._logger.debug('', exc_info=e)
                failures.append(e)
                runs.append({'epsilon': epsilon, 'error': str(e)})
                continue
            transverse = transverse_ground_energy(grid)
            continuum = continuum_transverse_energy(epsilon)
            gaps, continuum_gaps = [], []
            for i, (tube_value, surface_value) in enumerate(zip(spectrum.eigenvalues, surface)):
                shifted = tube_value - transverse
                gaps.append(abs(shifted - surface_value))
                continuum_gaps.append(abs(tube_value - continuum - surface_value))
                table.append(epsilon, i, tube_value, shifted, surface_value, gaps[-1])
            self._logger.info('epsilon = %g: ground gap %.6g', epsilon, gaps[0])
            runs.append({
                'epsilon': epsilon,
                'transverse_energy': transverse,
                'continuum_transverse_energy': continuum,
                'gaps': gaps,
                'continuum_gaps': continuum_gaps,
                **_spectrum_results(spectrum),
            })

        self.job.write_table('squeeze.csv', table)
        self.job.write_report(self.name, {
            'surface_eigenvalues': surface.tolist(),
            'normal_stencil': self.job.config.tube.normal_stencil,
            'runs': runs,
        })
        if failures:
            raise failures[0]
        return True


class VerifyAction(Action):
    name: str = 'verify'
    description: str = 'run the geometric and operator verification battery'

    def __call__(self, argument_parser, arguments) -> bool:
        records = run_checks(self.job.patch, self.job.config, self.job.entry)
        failures = [record for record in records if not record.passed]
        self.job.write_report(self.name, {'passed': not failures, 'checks': len(records)}, checks=records)
        if failures:
            for record in failures:
                self._logger.error('%s', record.json())
            raise VerificationError(failures)
        return True


class SurfacesAction(Action):
    name: str = 'surfaces'
    description: str = 'list the built-in surfaces and the job configuration schema'
    requires_config: bool = False

    def __call__(self, argument_parser, arguments) -> bool:
        self._logger.info('%s', json.dumps(preset_schemas(), indent=2))
        self._logger.info('%s', JobConfig.schema_json(indent=2))
        return True


ACTIONS = (GeometryAction, Spectrum2DAction, Spectrum3DAction, SqueezeAction, VerifyAction, SurfacesAction)
