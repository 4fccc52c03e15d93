"""Plane-sweep multi-view stereo with semi-global cost aggregation and surface-aware path priors."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DegenerateGeometryError,
    FassMvsError,
    InvalidBundleError,
    InvalidInputError,
)
from .geometry import CalibratedView, DepthBounds, Intrinsics, PlaneSet, Pose, SweepPlane
from .matching import CostFunctionSpec, CostVolume, SamplingRange, sweep_cost_volume
from .pipeline import BundleEstimate, PipelineConfig, estimate_bundle, select_bundles
from .sgm import SgmConfig, aggregate, wta

__all__ = [
    "BundleEstimate",
    "CalibratedView",
    "ConfigurationError",
    "CostFunctionSpec",
    "CostVolume",
    "DegenerateGeometryError",
    "DepthBounds",
    "FassMvsError",
    "Intrinsics",
    "InvalidBundleError",
    "InvalidInputError",
    "PipelineConfig",
    "PlaneSet",
    "Pose",
    "SamplingRange",
    "SgmConfig",
    "SweepPlane",
    "aggregate",
    "estimate_bundle",
    "select_bundles",
    "sweep_cost_volume",
    "wta",
    "__version__",
]
