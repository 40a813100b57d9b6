"""Typed exceptions shared by all modules.

The CLI maps ``InputError`` and its subclasses to exit code 2 and
``NumericalError`` and its subclasses to exit code 3.
"""


class MixFbmError(Exception):
    """Base class for package errors."""


class InputError(MixFbmError, ValueError):
    """Malformed input, e.g. a grid mismatch or an unknown kernel id."""


class DomainError(InputError):
    """Argument outside the domain of the operation."""


class SingularityError(DomainError):
    """Kernel evaluated exactly on its singular diagonal."""


class UnsupportedRegimeError(InputError):
    """Hurst exponent in a regime where the requested density does not exist."""


class NumericalError(MixFbmError, ArithmeticError):
    """Numerical failure."""


class SolverError(NumericalError):
    """Linear system singular or too badly conditioned."""


class InvariantViolation(NumericalError):
    """A structural invariant failed, e.g. a nonpositive diagonal of g."""
