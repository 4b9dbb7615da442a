"""Exception hierarchy.

Errors split into two families so the CLI can map them to exit codes:
``ValidationError`` (bad or unsupported input, exit 1) and ``NumericalError``
(a computation failed to meet its accuracy contract, exit 2).
"""


class Homog3Error(Exception):
    """Base class for every error raised by this package."""


class ValidationError(Homog3Error, ValueError):
    pass


class MetricSpecError(ValidationError):
    """A metric description could not be parsed or is out of range."""


class UnsupportedModelError(ValidationError):
    """The requested quantity has no implementation for this model."""


class NumericalError(Homog3Error, ArithmeticError):
    pass


class StepSizeError(NumericalError):
    """Geodesic integration drifted beyond the allowed speed tolerance."""


class MeshTooCoarseError(NumericalError):
    pass


class DegenerateMetricError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class InfiniteVolumeError(NumericalError):
    pass


class SingularSolveError(NumericalError):
    pass


class KernelCollapseError(NumericalError):
    """The Jacobi operator does not have a one-dimensional near-kernel."""


class ConvergenceError(NumericalError):
    pass
