"""Exception hierarchy shared by all fvdsim modules."""


class FvdError(Exception):
    """Base class for every error raised by fvdsim."""


class DimensionError(FvdError, ValueError):
    """Operands act on different numbers of sites."""


class SpecError(FvdError, ValueError):
    """Invalid physical parameters."""


class OrderCapError(FvdError, ValueError):
    """Nested-commutator order above the configured cap."""


class NormalizationError(FvdError, ValueError):
    """State is not normalized."""


class AlgebraError(FvdError, ValueError):
    """Operator lacks a required algebraic property (e.g. hermiticity)."""


class ConvergenceError(FvdError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EnumerationCapError(FvdError, ValueError):
    """Requested size exceeds an exhaustive-enumeration cap."""


class StepSizeError(FvdError, RuntimeError):
    """Time integration lost accuracy (norm drift)."""


class ArgumentError(FvdError, ValueError):
    pass


class DomainError(FvdError, ValueError):
    pass


class DegenerateReferenceError(FvdError, ValueError):
    """Rescaling reference value is zero."""


class EmptyWindowError(FvdError, ValueError):
    """No samples fall inside the requested fit band."""


class LogDomainError(FvdError, ValueError):
    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class ConfigError(FvdError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
