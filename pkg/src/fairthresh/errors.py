"""Exception hierarchy.

Errors deriving from :class:`InputError` signal bad user input (CLI exit
code 2); everything else is a runtime failure (exit code 1).
"""


class FairThreshError(Exception):
    """Base class for all package errors."""


class InputError(FairThreshError):
    """Malformed or out-of-domain input."""


class ParseError(InputError):
    pass


class DomainError(InputError):
    pass


class NonFiniteError(InputError):
    pass


class EmptyCellError(InputError):
    """A (label, group) cell has no samples where samples are required."""

    def __init__(self, cell, message=None):
        self.cell = cell
        y, a = cell
        super().__init__(message or f"cell (y={y}, a={a}) is empty")


class ConfigError(InputError):
    pass


class DensityError(FairThreshError):
    pass


class DegenerateSampleError(DensityError):
    pass


class FitFailure(DensityError):
    pass


class AllFitsFailed(DensityError):
    pass


class InfiniteNLL(DensityError):
    pass


class OutOfSupport(DensityError):
    pass


class EmptyGroupError(FairThreshError):
    pass


class OptimizationError(FairThreshError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class Stalled(OptimizationError):
    pass


class MaxIterations(OptimizationError):
    pass


class UndefinedMetric(FairThreshError):
    def __init__(self, metric, reason):
        self.metric = metric
        super().__init__(f"{metric} is undefined: {reason}")


class NoIntersection(FairThreshError):
    pass


class DegenerateCurves(FairThreshError):
    pass


class HardtConstructionError(FairThreshError):
    """Baseline operating points violate the segment-intersection preconditions."""
