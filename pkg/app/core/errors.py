from typing import Optional

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_TRIAL_FAILURES = 2
EXIT_ORACLE_FAILURE = 3


class OrthoError(Exception):
    """Base class for every failure raised by the orthogonalization stack"""

    exit_code = EXIT_TRIAL_FAILURES


class DimensionMismatchError(OrthoError):
    exit_code = EXIT_CONFIG_ERROR


class NonFiniteError(OrthoError):
    """A NaN or Inf appeared in an intermediate result.

    `step` names the Newton-Schulz equation that produced it (3 = Gram,
    4 = polynomial in the Gram, 5 = update), `iteration` the pipeline iteration.
    """

    def __init__(self, message: str, step: Optional[int] = None, iteration: Optional[int] = None):
        super().__init__(message)
        self.step = step
        self.iteration = iteration


class OracleError(OrthoError):
    exit_code = EXIT_ORACLE_FAILURE


class ConvergenceError(OracleError):
    def __init__(self, message: str, sweeps: int):
        super().__init__(message)
        self.sweeps = sweeps


class PreconditionError(OrthoError):
    def __init__(self, message: str, column: Optional[int] = None):
        super().__init__(message)
        self.column = column


class ScheduleError(OrthoError):
    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message)
        self.line = line


class ConfigError(OrthoError):
    exit_code = EXIT_CONFIG_ERROR


class DivergenceError(OrthoError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code"""
    if isinstance(exc, OrthoError):
        return exc.exit_code
    if isinstance(exc, (ValueError, FileNotFoundError)):
        return EXIT_CONFIG_ERROR
    return EXIT_TRIAL_FAILURES
