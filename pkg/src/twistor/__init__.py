"""Canonical beta-maps on transport twistor spaces of conformally Euclidean disks.

Modules: geometry (metrics), flow (geodesics), transforms (X-ray and normal
operators), beta (beta-extensions), bds (blow-down certificates), oracles
(constant curvature closed forms), io (containers) and cli.
"""
from .geometry import (ConformalMetric, DomainError, GridSpec, check_simple, constant_curvature_metric,
                       custom_metric, euclidean_metric, gauss_curvature, metric_from_expression,
                       metric_from_spec, perturbed_metric)
from .flow import BoundaryPoint, GeodesicRecord, PhasePoint
from .polar import PolarGrid
from .transforms import BoundaryField, BoundaryGrid, IllConditionedError, ModeField
from .beta import TwistorMap, beta_extension, evaluate
from .bds import BdsReport, verify
from .oracles import CCParams, beta_cc, oracle_map, resolved_oracle_map

__version__ = "0.1.0"

__all__ = [
    "ConformalMetric", "DomainError", "GridSpec", "check_simple", "constant_curvature_metric", "custom_metric",
    "euclidean_metric", "gauss_curvature", "metric_from_expression", "metric_from_spec", "perturbed_metric",
    "BoundaryPoint", "GeodesicRecord", "PhasePoint", "PolarGrid", "BoundaryField", "BoundaryGrid",
    "IllConditionedError", "ModeField", "TwistorMap", "beta_extension", "evaluate", "BdsReport", "verify",
    "CCParams", "beta_cc", "oracle_map", "resolved_oracle_map",
]
