"""Hyperbolic fillings of finite metric spaces and their uniformizations."""

__version__ = "0.1.0"

from .metric import FiniteMetricSpace, MetricError, from_matrix, from_points, load_metric, scale_stats, validate_metric
from .filling import FillingGraph, FillingParams, FillingParamError, build_filling
from .uniformize import EpsilonWeighting, Uniformized

__all__ = [
    "__version__",
    "FiniteMetricSpace",
    "MetricError",
    "from_matrix",
    "from_points",
    "load_metric",
    "scale_stats",
    "validate_metric",
    "FillingGraph",
    "FillingParams",
    "FillingParamError",
    "build_filling",
    "EpsilonWeighting",
    "Uniformized",
]
