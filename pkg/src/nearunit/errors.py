"""Exception hierarchy shared by every module.

The CLI maps any :class:`NearUnitError` to exit code 1 and reports the class
name, so names here are part of the command-line contract.
"""


class NearUnitError(Exception):
    """Base class for domain errors."""


class InvalidInput(NearUnitError, ValueError):
    pass


class ConfigError(InvalidInput):
    pass


class RegimeInfeasible(NearUnitError):
    pass


class NotStationary(NearUnitError):
    pass


class DegenerateDesign(NearUnitError):
    pass


class SingularDesign(DegenerateDesign):
    pass


class ZeroDenominator(NearUnitError):
    pass


class NoConvergence(NearUnitError):
    def __init__(self, message, last=None, grad_norm=None):
        super().__init__(message)
        self.last = last
        self.grad_norm = grad_norm


class BoundaryHit(NearUnitError):
    pass


class InsufficientData(NearUnitError):
    pass


class SingularOmega(NearUnitError):
    pass


class AlphaAtOrAboveOne(NearUnitError):
    pass


class ParseError(InvalidInput):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NegativeValue(ParseError):
    pass


class MissingValue(ParseError):
    pass


class WindowTooShort(InvalidInput):
    pass
