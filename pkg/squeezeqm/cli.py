"""Command-line interface functionality for the squeezeqm interface"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence, Tuple, Type

from pydantic import ValidationError

from squeezeqm import DESCRIPTION, VERSION, JobError, SqueezeJob
from squeezeqm.actions import ACTIONS
from squeezeqm.catalog import CatalogError
from squeezeqm.config import JobConfig
from squeezeqm.discretize import DiscretizationError
from squeezeqm.dsl import ExpressionDomainError, ExpressionError
from squeezeqm.eigen import ConvergenceError, SolverError
from squeezeqm.geometry import GeometryError
from squeezeqm.transform import TransformError
from squeezeqm.verify import VerificationError

_logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3
EXIT_SOLVER = 4
EXIT_VERIFY = 5

# first match wins
EXIT_CODES: Sequence[Tuple[Type[BaseException], int]] = (
    (ExpressionDomainError, EXIT_GEOMETRY),
    (ValidationError, EXIT_CONFIG),
    (JobError, EXIT_CONFIG),
    (CatalogError, EXIT_CONFIG),
    (ExpressionError, EXIT_CONFIG),
    (OSError, EXIT_CONFIG),
    (GeometryError, EXIT_GEOMETRY),
    (DiscretizationError, EXIT_GEOMETRY),
    (TransformError, EXIT_GEOMETRY),
    (ConvergenceError, EXIT_SOLVER),
    (SolverError, EXIT_SOLVER),
    (VerificationError, EXIT_VERIFY),
)


class MaximumLogLevelLogFilter(logging.Filter):
    """A log filter to omit records greater or equal to a specified log level."""
    def __init__(self, maximum_level: int, name: str = ''):
        super().__init__(name=name)
        self.maximum_level = maximum_level

    def filter(self, record):
        return record.levelno < self.maximum_level


# yapf: disable
def _parse_arguments():
    root_parser = argparse.ArgumentParser(description=DESCRIPTION)
    root_subparsers = root_parser.add_subparsers(dest='action', required=True)

    root_parser.add_argument('--version', '-V', action='version', version=f'%(prog)s {VERSION}')
    group = root_parser.add_mutually_exclusive_group()
    group.add_argument('--verbose', '-v', dest='verbosity', action='count', default=0,
                       help='increase output verbosity')
    group.add_argument('--quiet', '-q', dest='verbosity', action='store_const', const=None,
                       help='disable output')

    for action in ACTIONS:
        parser = root_subparsers.add_parser(action.name, description=action.description, help=action.description)
        parser.add_argument('--config', '-c', type=Path, required=action.requires_config,
                            help='a JSON job configuration')
        if action.requires_config:
            parser.add_argument('--out', '-o', type=Path,
                                help='the output directory (default: the configured output)')
            parser.add_argument('--dump-matrix', action='store_true', default=False,
                                help='write the assembled operator in MatrixMarket format')

    return root_parser, root_parser.parse_args()


# yapf: enable
def _configure_logging(verbosity: Optional[int]):
    if verbosity is not None:
        console_level = max(1, logging.INFO - (10 * verbosity))
        console_formatter = logging.Formatter(fmt='%(message)s')
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.addFilter(MaximumLogLevelLogFilter(logging.WARNING))
        console_handler.setFormatter(console_formatter)
        console_handler.setLevel(console_level)
        error_formatter = logging.Formatter(fmt='%(levelname)s: %(message)s')
        error_handler = logging.StreamHandler(sys.stderr)
        error_handler.setFormatter(error_formatter)
        error_handler.setLevel(logging.WARNING)
        logging.basicConfig(handlers=(console_handler, error_handler), level=console_level)
        _logger.setLevel(console_level)
    else:
        logging.basicConfig(handlers=(logging.NullHandler(), ))


def exit_code(error: BaseException) -> int:
    for error_type, code in EXIT_CODES:
        if isinstance(error, error_type):
            return code
    raise error


def main():
    """The main command-line entry point for the squeezeqm interface"""

    argument_parser, arguments = _parse_arguments()
    _configure_logging(arguments.verbosity)

    try:
        job = None
        if arguments.config is not None:
            config = JobConfig.parse_file(arguments.config)
            job = SqueezeJob(config, output=getattr(arguments, 'out', None),
                             dump_matrix=getattr(arguments, 'dump_matrix', False))
        actions = {action.name: action(job) for action in ACTIONS}
        response = actions[arguments.action](argument_parser, arguments)
        sys.exit(EXIT_SUCCESS if response else 1)
    except Exception as e:  # pylint: disable=broad-except
        code = exit_code(e)
        _logger.error('%s failed: %s', arguments.action, e)
        _logger.debug('', exc_info=e)
        sys.exit(code)
