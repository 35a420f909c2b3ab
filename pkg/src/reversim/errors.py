"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`ReversimError`.  The ``exit_code`` attribute is what the command
line front end returns when the exception escapes a subcommand.
"""

from __future__ import annotations


class ReversimError(Exception):
    exit_code = 1


class ValidationError(ReversimError, ValueError):
    """Malformed input: wrong shape, bad parameter, unknown label."""

    exit_code = 2


class NotPSDError(ValidationError):
    pass


class NumericalConsistencyError(ValidationError):
    """A quantity that must be a probability fell outside [0, 1] beyond slack."""


class GridConfigurationError(ValidationError):
    pass


class TruncationError(ValidationError):
    """The truncated space is too small (or too aggressive) for the request."""


class NormViolationError(ValidationError):
    """A proposed reversing operator would have operator norm above one."""


class PlanMismatchError(ValidationError):
    pass


class ImpossibleOutcomeError(ReversimError):
    """Conditioning on an outcome whose probability is (numerically) zero."""

    exit_code = 3


class DegenerateFamilyError(ImpossibleOutcomeError):
    pass


class UnderflowError(ImpossibleOutcomeError):
    pass


class NotInvertibleError(ReversimError):
    """The measurement operator has no (numerically resolvable) left inverse."""

    exit_code = 4


class UnderflowFloorWarning(RuntimeWarning):
    """A Gaussian coefficient dropped below the double-precision floor."""


class ReversibilityMarginalWarning(RuntimeWarning):
    """An operator has diagonal entries at the underflow floor."""
