"""Exception types raised across the package."""


class DomainError(ValueError):
    """A quantity was requested where it is undefined (e.g. log(alpha/sigma) at sigma=0)."""


class LambdaRangeError(ValueError):
    """A half-logSNR value lies outside the range a schedule can attain."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SpectrumError(ValueError):
    """Invalid eigenvalue spectrum; ``index`` points at the offending mode (0-based)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateGainError(ArithmeticError):
    """A per-step mode gain is zero, so its logarithm does not exist."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class ConfigError(ValueError):
    """Malformed experiment configuration."""
