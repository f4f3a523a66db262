import io
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import scipy.io
import scipy.sparse as sparse

from squeezeqm.config import MatrixMetadata

_logger = logging.getLogger(__name__)

Cell = Union[int, float, str]


def format_cell(value: Cell) -> str:
    """Integers verbatim, floats with 17 significant digits so they read back exactly.

    >>> format_cell(0.1)
    '0.10000000000000001'
    >>> format_cell(3)
    '3'
    """
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f'{float(value):.17g}'
    return str(value)


@dataclass
class CsvTable:
    columns: Sequence[str]
    rows: List[Sequence[Cell]] = field(default_factory=list)

    def append(self, *row: Cell):
        if len(row) != len(self.columns):
            raise ValueError(f'row of {len(row)} cells for {len(self.columns)} columns')
        self.rows.append(row)

    def render(self) -> str:
        lines = [','.join(self.columns)]
        lines.extend(','.join(format_cell(cell) for cell in row) for row in self.rows)
        return '\n'.join(lines) + '\n'


def atomic_write(path: Path, content: Union[str, bytes]):
    """Write through a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = 'wb' if isinstance(content, bytes) else 'w'
    handle, temporary = tempfile.mkstemp(prefix=f'.{path.name}.', dir=str(path.parent))
    try:
        with os.fdopen(handle, mode) as stream:
            stream.write(content)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise
    _logger.debug('Wrote %s', path)


def write_csv(path: Path, table: CsvTable):
    atomic_write(path, table.render())


def dump_matrix_market(path: Path, matrix: sparse.spmatrix, metadata: MatrixMetadata):
    """Write ``matrix`` in MatrixMarket coordinate format, lower triangle only, and its
    metadata next to it as ``<path>.json``."""
    buffer = io.BytesIO()
    scipy.io.mmwrite(buffer, sparse.coo_matrix(matrix), comment=f'{metadata.command} {metadata.surface}',
                     field='real', precision=17, symmetry='symmetric')
    atomic_write(path, buffer.getvalue())
    atomic_write(Path(f'{path}.json'), metadata.json(indent=2))
    _logger.info('Dumped %d x %d matrix to %s', metadata.rows, metadata.rows, path)
