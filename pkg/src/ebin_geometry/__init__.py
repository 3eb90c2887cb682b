"""Explicit geometry of the L2 metric on the space of Riemannian metrics.

The base manifold is a flat n-torus discretised into cells.  Modules:

``spd_core``
    Pointwise linear algebra on positive-definite tensors: exponential and
    logarithm of the L2 metric, certified bounds on the pointwise distance,
    and the converge-or-degenerate classifier.
``metric_space``
    Field-level scalar products, volumes, curvature, path lengths and
    distance bounds.
``completion``
    Omega-limits of Cauchy sequences and the completed conformal orbit.
``cli``
    Preset experiments with machine-readable checks.
"""

from . import completion, metric_space, spd_core
from .errors import (
    GeometryError,
    InvalidInput,
    NotCauchySequence,
    NumericalFailure,
    OutOfDomain,
    OutOfRange,
)
from .fields import CellMask, GridSpec, MetricField, MetricPath, SemiMetricField, TangentField
from .io import load_field, load_path, save_field, save_path
from .spd_core import PointClassification, PointKind, SymTensorPoint

__version__ = "0.1.0"

__all__ = [
    "spd_core",
    "metric_space",
    "completion",
    "GeometryError",
    "InvalidInput",
    "NotCauchySequence",
    "NumericalFailure",
    "OutOfDomain",
    "OutOfRange",
    "GridSpec",
    "MetricField",
    "TangentField",
    "SemiMetricField",
    "CellMask",
    "MetricPath",
    "SymTensorPoint",
    "PointKind",
    "PointClassification",
    "load_field",
    "save_field",
    "load_path",
    "save_path",
]
