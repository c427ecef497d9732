"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class TailcastError(Exception):
    exit_code = 1


class DataIOError(TailcastError):
    exit_code = 2


class InsufficientDataError(TailcastError):
    exit_code = 3


class ModelMismatchError(TailcastError):
    exit_code = 4


class NumericalError(TailcastError):
    exit_code = 5


class DomainError(NumericalError, ValueError):
    """Argument outside the support / parameter space of a distribution."""


class FitError(NumericalError):
    """Optimizer failed; ``best`` holds the best parameters seen, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
