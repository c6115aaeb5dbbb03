"""Exception hierarchy."""


class PxBiharmonicError(Exception):
    """Base class for all errors raised by this package."""


class InvalidFieldError(PxBiharmonicError, ValueError):
    """A field is empty, has the wrong shape or contains non-finite values."""


class GridMismatchError(PxBiharmonicError, ValueError):
    """Two objects that must live on the same grid do not."""


class HypothesisViolationError(PxBiharmonicError):
    """Structural hypotheses on the exponents or the integrand failed."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UndefinedBranchError(PxBiharmonicError, ValueError):
    """The Simon-type estimate is undefined for (u, v) = (0, 0) when p < 2."""


class OutOfRegimeError(PxBiharmonicError, ValueError):
    """The coercivity chain was evaluated outside of ``||u|| > 1``."""


class ValleyNotFoundError(PxBiharmonicError):
    """No scanned amplitude produced negative energy."""


class StageFailureError(PxBiharmonicError):
    """A descent stage stopped decreasing the energy before converging."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(PxBiharmonicError, ValueError):
    """Malformed run configuration."""
