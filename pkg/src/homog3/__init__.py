"""Numerical geometry of homogeneous 3-manifolds presented as metric Lie groups."""

from .errors import Homog3Error, NumericalError, ValidationError
from .models import (
    FrameMetricData,
    Matrix2,
    ProductS2R,
    SemidirectModel,
    Sl2FrameMetric,
    metric_spec,
    parse_metric_spec,
)

__all__ = [
    "FrameMetricData",
    "Homog3Error",
    "Matrix2",
    "NumericalError",
    "ProductS2R",
    "SemidirectModel",
    "Sl2FrameMetric",
    "ValidationError",
    "metric_spec",
    "parse_metric_spec",
]
__version__ = "0.1.0"
