from typing import Optional


class BundleError(Exception):
    """Base class for everything the solver raises on purpose."""


class ConfigError(BundleError):
    pass


class DimensionError(BundleError):
    pass


class EmptyModelError(BundleError):
    pass


class BundlePolicyError(BundleError):
    pass


class UnsupportedOracleError(BundleError):
    pass


class InfeasibleStartError(BundleError):
    pass


class UnknownProblemError(BundleError):
    pass


class TangentProgramError(BundleError):
    pass


class TrialStepError(BundleError):
    pass


class EvaluationError(BundleError):
    def __init__(self, message: str, outer: Optional[int] = None, inner: Optional[int] = None):
        if outer is not None:
            message = f"{message} (outer j={outer}, inner k={inner})"
        super().__init__(message)
        self.outer = outer
        self.inner = inner
