"""Error hierarchy shared by all modules.

Every error carries the name of the module-level condition that raised it.
The command line maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class HallEdgeLabError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(HallEdgeLabError, ValueError):
    """Bad input: malformed model, out-of-range parameter, unknown key."""

    exit_code = 2


class NumericalError(HallEdgeLabError, ArithmeticError):
    """A computation could not be completed in a meaningful way."""

    exit_code = 3


class TooLarge(ValidationError):
    pass


class AnomalyOutOfRange(ValidationError):
    pass


class OriginSingularity(ValidationError):
    pass


class NoGap(NumericalError):
    pass


class AmbiguousBranch(NumericalError):
    pass


class FlatBand(NumericalError):
    pass


class GapClosed(NumericalError):
    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class EigensolverFailure(NumericalError):
    def __init__(self, message, k1=None):
        super().__init__(message)
        self.k1 = k1


class DegenerateAtFermi(NumericalError):
    pass


class NonConvergent(NumericalError):
    pass


class PoleHit(NumericalError):
    pass


class BetaBoundViolated(NumericalError):
    pass


class NoContraction(NumericalError):
    pass
