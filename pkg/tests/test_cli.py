import logging
import sys

from contextlib import ExitStack
from dataclasses import dataclass
from unittest import TestCase
from unittest.mock import DEFAULT as DEFAULT_MOCK
from unittest.mock import MagicMock, patch

from pydantic import ValidationError

from squeezeqm import JobError, actions, cli
from squeezeqm.catalog import CatalogError
from squeezeqm.config import CheckRecord, JobConfig
from squeezeqm.dsl import ExpressionDomainError, ExpressionSyntaxError
from squeezeqm.eigen import ConvergenceError, SolverError
from squeezeqm.geometry import DegenerateImmersionError, TubeValidityError
from squeezeqm.transform import TransformError
from squeezeqm.verify import VerificationError


class TestConfigureLogging(TestCase):
    def test_verbosity_none_configures_null_handler(self):
        with ExitStack() as _scope:
            mock_logging = _scope.enter_context(
                patch.multiple('logging', basicConfig=DEFAULT_MOCK, getLogger=DEFAULT_MOCK))
            cli._configure_logging(None)

            mock_logging['basicConfig'].assert_called_once()
            mock_basic_config_kwargs = mock_logging['basicConfig'].mock_calls[0][2]
            assert isinstance(mock_basic_config_kwargs['handlers'][0], logging.NullHandler)

    def test_verbosity_nonzero_configures_logging(self):
        # `-v` lowers the console level from INFO (20) to DEBUG (10)
        expected_verbosity_argument = 1
        expected_verbosity = 10
        with ExitStack() as _scope:
            mock_logging = _scope.enter_context(
                patch.multiple('logging', basicConfig=DEFAULT_MOCK, getLogger=DEFAULT_MOCK))
            cli._configure_logging(expected_verbosity_argument)

            mock_logging['basicConfig'].assert_called_once()
            mock_basic_config_kwargs = mock_logging['basicConfig'].mock_calls[0][2]

            assert mock_basic_config_kwargs['level'] == expected_verbosity

            stdout_handlers = [
                handler for handler in mock_basic_config_kwargs['handlers']
                if isinstance(handler, logging.StreamHandler) and handler.stream.name == sys.stdout.name
            ]
            assert stdout_handlers
            assert all(handler.level == expected_verbosity for handler in stdout_handlers)

            stderr_handlers = [
                handler for handler in mock_basic_config_kwargs['handlers']
                if isinstance(handler, logging.StreamHandler) and handler.stream.name == sys.stderr.name
            ]
            assert stderr_handlers
            assert all(handler.level == logging.WARNING for handler in stderr_handlers)


class TestMaximumLogLevelLogFilter(TestCase):
    def test_filter(self):
        log_filter = cli.MaximumLogLevelLogFilter(logging.WARNING)
        for level, expected in ((logging.DEBUG, True), (logging.INFO, True), (logging.WARNING, False),
                                (logging.ERROR, False)):
            with self.subTest(level=level):
                record = logging.LogRecord('squeezeqm', level, __file__, 1, 'message', None, None)
                assert log_filter.filter(record) == expected


class TestExitCode(TestCase):
    def test_mapping(self):
        @dataclass
        class SubTest:
            error: BaseException
            expected: int

        config_error = None
        try:
            JobConfig.parse_obj({'surface': {'preset': 'torus'}, 'tube': {'nq': 4}})
        except ValidationError as e:
            config_error = e

        subtests = [
            SubTest(config_error, cli.EXIT_CONFIG),
            SubTest(JobError('k too large'), cli.EXIT_CONFIG),
            SubTest(CatalogError('unknown surface'), cli.EXIT_CONFIG),
            SubTest(ExpressionSyntaxError(4, 'an operand', 'end of input'), cli.EXIT_CONFIG),
            SubTest(FileNotFoundError('job.json'), cli.EXIT_CONFIG),
            SubTest(ExpressionDomainError('log(s1)', 'argument <= 0'), cli.EXIT_GEOMETRY),
            SubTest(DegenerateImmersionError((0.0, 1.0), 0.0), cli.EXIT_GEOMETRY),
            SubTest(TubeValidityError(1.5, 1.0), cli.EXIT_GEOMETRY),
            SubTest(TransformError('even nq'), cli.EXIT_GEOMETRY),
            SubTest(SolverError('k = 0'), cli.EXIT_SOLVER),
            SubTest(ConvergenceError(MagicMock(), 'not converged'), cli.EXIT_SOLVER),
            SubTest(VerificationError([CheckRecord(name='det_identity', passed=False, value=1.0)]),
                    cli.EXIT_VERIFY),
        ]
        for subtest in subtests:
            with self.subTest(error=type(subtest.error).__name__):
                assert cli.exit_code(subtest.error) == subtest.expected

    def test_unknown_errors_propagate(self):
        with self.assertRaises(KeyError):
            cli.exit_code(KeyError('surprise'))


class TestMain(TestCase):
    def test_log_configuration(self):
        expected_verbosity = 1
        mock_parse_arguments = MagicMock(
            return_value=(
                MagicMock(),
                MagicMock(verbosity=expected_verbosity, action='surfaces', config=None)
            ))
        mock_configure_logging = MagicMock()
        with ExitStack() as _scope:
            mock_exit = _scope.enter_context(
                patch.object(cli.sys, 'exit'))
            _scope.enter_context(
                patch.object(cli, '_parse_arguments', mock_parse_arguments))
            _scope.enter_context(
                patch.object(cli, '_configure_logging', mock_configure_logging))
            mock_job = _scope.enter_context(
                patch.object(cli, 'SqueezeJob'))
            _scope.enter_context(
                patch.object(actions.SurfacesAction, '__call__', return_value=True)
            )
            cli.main()

            mock_parse_arguments.assert_called()
            mock_configure_logging.assert_called_with(expected_verbosity)
            mock_job.assert_not_called()
            mock_exit.assert_called_once_with(cli.EXIT_SUCCESS)

    def test_job_from_configuration(self):
        arguments = MagicMock(verbosity=None, action='verify', config='job.json', out='results',
                              dump_matrix=True)
        config = JobConfig.parse_obj({'surface': {'preset': 'plane'}})
        with ExitStack() as _scope:
            mock_exit = _scope.enter_context(patch.object(cli.sys, 'exit'))
            _scope.enter_context(
                patch.object(cli, '_parse_arguments', MagicMock(return_value=(MagicMock(), arguments))))
            _scope.enter_context(patch.object(cli, '_configure_logging'))
            mock_parse_file = _scope.enter_context(
                patch.object(cli.JobConfig, 'parse_file', return_value=config))
            mock_job = _scope.enter_context(patch.object(cli, 'SqueezeJob'))
            _scope.enter_context(patch.object(actions.VerifyAction, '__call__', return_value=True))
            cli.main()

            mock_parse_file.assert_called_once_with('job.json')
            mock_job.assert_called_once_with(config, output='results', dump_matrix=True)
            mock_exit.assert_called_once_with(cli.EXIT_SUCCESS)

    def test_failures_exit_with_mapped_code(self):
        arguments = MagicMock(verbosity=None, action='squeeze', config='job.json')
        with ExitStack() as _scope:
            mock_exit = _scope.enter_context(patch.object(cli.sys, 'exit'))
            _scope.enter_context(
                patch.object(cli, '_parse_arguments', MagicMock(return_value=(MagicMock(), arguments))))
            _scope.enter_context(patch.object(cli, '_configure_logging'))
            _scope.enter_context(patch.object(cli.JobConfig, 'parse_file'))
            _scope.enter_context(patch.object(cli, 'SqueezeJob'))
            _scope.enter_context(
                patch.object(actions.SqueezeAction, '__call__', side_effect=TubeValidityError(0.5, 0.4)))
            cli.main()

            mock_exit.assert_called_once_with(cli.EXIT_GEOMETRY)
