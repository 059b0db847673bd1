"""Exception hierarchy shared by the library and the CLI.

Each family carries the CLI exit code it maps to.
"""


class SansError(Exception):
    exit_code = 1


class ConfigError(SansError, ValueError):
    exit_code = 2


class DataError(SansError):
    exit_code = 3


class DatasetFormatError(DataError):
    """A dataset file is missing or a line does not parse."""


class NeighborhoodFormatError(DataError):
    pass


class CheckpointFormatError(DataError):
    pass


class VocabularyMismatchError(DataError):
    pass


class NumericError(SansError, ArithmeticError):
    exit_code = 4


class ContractViolation(SansError, ValueError):
    """A caller broke a documented precondition (bad id, bad k, ...)."""

    exit_code = 2


class ResourceLimitError(SansError, MemoryError):
    exit_code = 3


class RejectionBudgetExceeded(SansError, RuntimeError):
    exit_code = 4

    def __init__(self, message, positive=None):
        super().__init__(message)
        self.positive = positive
