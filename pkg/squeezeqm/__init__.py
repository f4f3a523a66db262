import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from squeezeqm._io import CsvTable, atomic_write, dump_matrix_market, write_csv
from squeezeqm.catalog import CatalogEntry, CatalogError, builtin
from squeezeqm.config import CheckRecord, JobConfig, MatrixMetadata, Report
from squeezeqm.discretize import Grid2, Grid3, SparseOperator, symmetrize
from squeezeqm.eigen import Spectrum, smallest_eigenpairs
from squeezeqm.geometry import SurfacePatch

try:
    from squeezeqm.__metadata__ import DESCRIPTION, VERSION
except ImportError:  # running from a source tree that was never built
    VERSION = '0.0.0'
    DESCRIPTION = 'squeezeqm builds and checks the effective Hamiltonian of a particle confined to a surface'

_logger = logging.getLogger(__name__)


class JobError(RuntimeError):
    """A job could not be set up from its configuration"""


class SqueezeJob:
    """One validated job configuration together with the directory its results go to."""
    def __init__(self, config: JobConfig, output: Optional[Path] = None, dump_matrix: bool = False):
        self.config = config
        self.output = Path(output if output is not None else config.output)
        self.dump_matrix = dump_matrix
        self._surface: Optional[Tuple[SurfacePatch, Optional[CatalogEntry]]] = None
        self._started = time.monotonic()

    @property
    def surface(self) -> Tuple[SurfacePatch, Optional[CatalogEntry]]:
        """The configured patch and, for presets, its catalog entry."""
        if self._surface is None:
            surface = self.config.surface
            if surface.is_preset:
                entry = builtin(surface.preset, surface.params)  # type: ignore[arg-type]
                self._surface = (entry.patch, entry)
            else:
                patch = SurfacePatch.from_expressions(
                    surface.x,  # type: ignore[arg-type]
                    surface.y,  # type: ignore[arg-type]
                    surface.z,  # type: ignore[arg-type]
                    lengths=surface.lengths,  # type: ignore[arg-type]
                    periodic=surface.periodic,
                    params=surface.params,
                    name=surface.name or 'custom',
                    immersion_threshold=surface.immersion_threshold,
                )
                self._surface = (patch, None)
            _logger.debug('Surface %s: lengths %s, periodic %s', self._surface[0].name,
                          self._surface[0].lengths, self._surface[0].periodic)
        return self._surface

    @property
    def patch(self) -> SurfacePatch:
        return self.surface[0]

    @property
    def entry(self) -> Optional[CatalogEntry]:
        return self.surface[1]

    def require_spectral(self):
        entry = self.entry
        if entry is not None and not entry.spectral:
            raise CatalogError(f'{entry.name} is a geometry-only surface; spectral runs are refused')

    def grid2(self) -> Grid2:
        return Grid2.for_patch(self.patch, self.config.grid.n1, self.config.grid.n2)

    def grid3(self, epsilon: Optional[float] = None) -> Grid3:
        tube = self.config.tube
        return Grid3(self.grid2(), tube.nq, tube.epsilon if epsilon is None else epsilon)

    def solve(self, op: SparseOperator, exclude_constant: Optional[bool] = None) -> Spectrum:
        """The lowest ``eigen.k`` eigenpairs; raises ConvergenceError when any pair fails."""
        settings = self.config.eigen
        if settings.k > op.dimension:
            raise JobError(f'eigen.k = {settings.k} exceeds the {op.dimension} unknowns of the grid')
        spectrum = smallest_eigenpairs(
            op,
            settings.k,
            tol=settings.tol,
            seed=settings.seed,
            max_iter=settings.max_iter,
            basis_size=settings.basis_size,
            exclude_constant=settings.exclude_constant if exclude_constant is None else exclude_constant,
        )
        return spectrum.require_converged()

    def write_table(self, name: str, table: CsvTable) -> Path:
        path = self.output / name
        write_csv(path, table)
        _logger.info('Wrote %d row(s) to %s', len(table.rows), path)
        return path

    def write_report(self, command: str, results: Dict[str, Any],
                     checks: Optional[List[CheckRecord]] = None, name: Optional[str] = None) -> Path:
        report = Report(
            command=command,
            version=VERSION,
            config=self.config,
            seconds=time.monotonic() - self._started,
            results=results,
            checks=checks or [],
        )
        path = self.output / (name or f'{command}.json')
        atomic_write(path, report.json(indent=2))
        _logger.info('Wrote report to %s', path)
        return path

    def dump(self, command: str, op: SparseOperator, grid: Dict[str, Any]):
        """Write the symmetric form of ``op`` when matrix dumps were requested."""
        if not self.dump_matrix:
            return
        symmetric = op if op.similarity is not None or (op.weight == 1.0).all() else symmetrize(op)
        metadata = MatrixMetadata(
            command=command,
            surface=self.patch.name,
            rows=symmetric.dimension,
            nonzeros=symmetric.matrix.nnz,
            ordering='q-major, then s2, then s1' if 'nq' in grid else 's2-major, then s1',
            grid=grid,
            symmetry_defect=symmetric.symmetry_defect,
        )
        dump_matrix_market(self.output / f'{command}.mtx', symmetric.matrix, metadata)
