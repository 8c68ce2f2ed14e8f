"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, unreadable or malformed files with 3, numerical faults with 4.
"""


class DimensionError(ValueError):
    """Shapes or block structures do not match."""


class DomainError(ValueError):
    """A numeric argument lies outside its admissible range."""


class ConfigError(ValueError):
    """Invalid, unknown or inconsistent configuration."""


class InputError(OSError):
    """A file could not be read, written or parsed."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values or failed to converge."""


class SolverFault(NumericalError):
    """A runtime solver invariant was violated.

    Carries the iteration index at which the violation was detected.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class TrainingFault(NumericalError):
    """Training diverged or produced non-finite parameters."""
