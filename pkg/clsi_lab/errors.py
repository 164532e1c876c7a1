"""Exceptions raised across clsi_lab.

Input problems subclass ValueError, numerical and consistency problems subclass
RuntimeError, so callers that only know the builtins still catch them.
"""


class ClsiLabError(Exception):
    """Base class for every error raised by clsi_lab."""


class ConfigurationError(ClsiLabError, ValueError):
    """A config file or setting is missing or malformed."""


class DimensionMismatchError(ClsiLabError, ValueError):
    pass


class NotHermitianError(ClsiLabError, ValueError):
    pass


class DomainError(ClsiLabError, ValueError):
    """A scalar function is undefined at an eigenvalue."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class RankDeficiencyError(ClsiLabError, ValueError):
    pass


class NumericalFailureError(ClsiLabError, RuntimeError):
    pass


class DegenerateGeneratorError(ClsiLabError, ValueError):
    pass


class AmbiguityError(ClsiLabError, RuntimeError):
    """Zero and nonzero eigenvalues are not separated well enough to pick a kernel."""


class InconsistencyError(ClsiLabError, RuntimeError):
    """Two computations that must agree did not. Signals a bug, not bad input."""


class NearFixedPointError(ClsiLabError, ValueError):
    pass


class UnreachedTargetError(ClsiLabError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PoolExhaustedError(ClsiLabError, RuntimeError):
    pass


class PipelineStageError(ClsiLabError, RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
