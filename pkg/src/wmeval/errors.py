"""Exception types shared across the package."""


class WmevalError(ValueError):
    """Base class for all input and usage errors raised by wmeval."""


class ParameterError(WmevalError):
    """A scalar argument or configuration value is out of its domain."""


class ShapeError(WmevalError):
    """An array has the wrong rank, size, or a pair of arrays disagree."""


class CapacityError(WmevalError):
    """A message does not fit into the host image."""


class CorpusError(WmevalError):
    """An image corpus is empty or inconsistent."""


class DegenerateSampleError(WmevalError):
    """A statistic is undefined for the given sample (e.g. zero variance)."""
