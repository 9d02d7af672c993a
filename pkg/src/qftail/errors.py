"""Exception hierarchy.

Two families matter to callers: :class:`InputError` for malformed arguments
(CLI exit code 2) and :class:`DomainError` for mathematically inadmissible
requests such as a moment radius too small for a bound (CLI exit code 3).
"""


class QFTailError(Exception):
    """Base class for all errors raised by qftail."""


class InputError(QFTailError, ValueError):
    pass


class DomainError(QFTailError, ArithmeticError):
    pass


# input validation
class NonSquare(InputError):
    pass


class AsymmetryExceedsTol(InputError):
    pass


class NonFiniteEntry(InputError):
    pass


class EmptySpectrum(InputError):
    pass


class BadArgs(InputError):
    pass


class NegativeArgument(InputError):
    pass


class SpecMissing(InputError):
    pass


class BadConstraint(InputError):
    pass


class DimTooSmall(InputError):
    pass


class NotNormalized(InputError):
    pass


class ZeroMatrix(InputError):
    pass


# math-domain failures
class EigenFailure(DomainError):
    pass


class MuTooLarge(DomainError):
    pass


class MuInvalid(DomainError):
    pass


class NonFinite(DomainError):
    pass


class GTooSmall(DomainError):
    pass


class YBelowCritical(DomainError):
    pass


class ZNotAbovePDim(DomainError):
    pass


class AssumptionViolated(DomainError):
    pass


class SpectrumNotSubProjector(DomainError):
    pass


class D0NotPD(DomainError):
    pass


class RankDeficientDesign(DomainError):
    pass
