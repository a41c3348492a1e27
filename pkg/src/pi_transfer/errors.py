"""Exception types shared across the package."""


class PiTransferError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(PiTransferError, ValueError):
    pass


class SingularBasis(PiTransferError, ValueError):
    pass


class NonPositiveBasisValue(PiTransferError, ValueError):
    pass


class SchemaMismatch(PiTransferError, ValueError):
    pass


class PolicyReturnedNonFinite(PiTransferError, ArithmeticError):
    pass


class NoConvergence(PiTransferError, RuntimeError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class FormatVersionMismatch(PiTransferError, ValueError):
    pass


class CorruptTable(PiTransferError, ValueError):
    pass


class EmptyReport(PiTransferError, ValueError):
    pass


class UnknownAxis(PiTransferError, KeyError):
    pass
