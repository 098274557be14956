"""Exception types shared across the package."""


class KSError(Exception):
    """Base class for all package errors."""


class ConfigError(KSError, ValueError):
    """Invalid or incomplete configuration.

    ``field`` names the offending (dotted) config path when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class NotOnBoundary(KSError, ValueError):
    pass


class SingularAtOrigin(KSError, ZeroDivisionError):
    pass


class SizeMismatch(KSError, ValueError):
    pass


class CflViolation(KSError, RuntimeError):
    pass


class NumericalFailure(KSError, RuntimeError):
    """A run left the regime in which its results are meaningful."""


class BlowupDetected(NumericalFailure):
    def __init__(self, message, time=None, linf=None):
        self.time = time
        self.linf = linf
        super().__init__(message)


class NonConvergent(NumericalFailure):
    pass
