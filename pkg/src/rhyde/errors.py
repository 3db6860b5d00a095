"""Exception hierarchy shared by all modules."""


class RhydeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RhydeError, ValueError):
    """Bad arguments or inconsistent shapes."""


class DimensionMismatchError(ValidationError):
    pass


class HscFormatError(RhydeError, IOError):
    """A file does not conform to the HSC binary layout."""


class BadMagicError(HscFormatError):
    pass


class TruncatedPayloadError(HscFormatError):
    pass


class PayloadSizeError(HscFormatError):
    """Payload is longer than the header declares."""


class NonFiniteSampleError(HscFormatError):
    pass


class NumericalError(RhydeError, ArithmeticError):
    """A computation hit a numerical dead end."""


class ZeroDenominatorError(NumericalError, ZeroDivisionError):
    pass


class NotPositiveDefiniteError(NumericalError):
    pass


class DegenerateCovarianceError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DenoiserError(NumericalError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
