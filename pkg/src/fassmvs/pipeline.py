"""Coarse-to-fine depth, normal and confidence estimation for one image bundle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, InvalidBundleError, InvalidInputError
from .geometry import (
    FRONTO_PARALLEL,
    CalibratedView,
    DepthBounds,
    Intrinsics,
    PlaneSet,
    bounding_distances,
    plane_distances,
    sweep_partner,
    unit,
)
from .matching import CostFunctionSpec, SamplingRange, sweep_cost_volume
from .sgm import SgmConfig, aggregate, refine_depths, wta
from .surface_maps import confidence, normals_from_depth, smooth_normals

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for :func:`estimate_bundle`.

    ``range_radius`` fixes the half-width of the per-pixel depth search
    interval on refined levels; ``None`` derives it per pixel as
    ``range_radius_factor`` times the local plane spacing of the coarser level
    and ``math.inf`` searches the full depth range everywhere.
    """

    depth_range: tuple[float, float]
    bundle_size: int = 5
    pyramid_levels: int = 3
    sweep_normal: tuple[float, float, float] = tuple(FRONTO_PARALLEL)
    range_radius: float | None = None
    range_radius_factor: float = 3.0
    max_planes: int = 256
    sgm: SgmConfig = field(default_factory=SgmConfig)
    matcher: CostFunctionSpec = field(default_factory=CostFunctionSpec)
    normal_radius: int = 2
    median_size: int = 5
    rho_deg: float = 60.0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.bundle_size < 3 or self.bundle_size % 2 == 0:
            raise ConfigurationError(f"bundle size must be odd and at least 3, got {self.bundle_size}")
        if self.pyramid_levels < 1:
            raise ConfigurationError("at least one pyramid level is required")
        d_min, d_max = self.depth_range
        if not (0 < d_min < d_max and math.isfinite(d_max)):
            raise ConfigurationError(f"depth range needs 0 < min < max, got {d_min}:{d_max}")
        if self.max_planes < 2:
            raise ConfigurationError("max_planes must be at least 2")
        if self.range_radius is not None and not self.range_radius > 0:
            raise ConfigurationError("range radius must be positive")
        if self.sgm.variant == "surface-normal" and self.pyramid_levels < 2:
            raise ConfigurationError("the surface-normal variant needs a coarser level to supply prior normals")
        if self.normal_radius < 1 or self.median_size < 1 or self.median_size % 2 == 0:
            raise ConfigurationError("normal radius must be >= 1 and the median size odd")
        unit(self.sweep_normal)


@dataclass(frozen=True)
class LevelSummary:
    level: int
    shape: tuple[int, int]
    planes: int
    max_slots: int
    valid_fraction: float


@dataclass(eq=False)
class BundleEstimate:
    depth: np.ndarray
    normals: np.ndarray
    confidence: np.ndarray
    ref_index: int
    levels: list[LevelSummary]


def _blur(image: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(np.asarray(image, dtype=np.float64), 1.0, mode="mirror", radius=1)


def build_pyramids(views: Sequence[CalibratedView], levels: int) -> list[list[CalibratedView]]:
    """Per level, the bundle blurred (3x3, sigma 1) and subsampled by two; level 0 is the input."""
    if levels < 1:
        raise ConfigurationError("at least one pyramid level is required")
    pyramid = [list(views)]
    for _ in range(levels - 1):
        coarser = []
        for v in pyramid[-1]:
            img = _blur(v.image)[::2, ::2]
            coarser.append(CalibratedView(img, v.intrinsics.halved(), v.pose))
        pyramid.append(coarser)
    return pyramid


def upscale_nearest(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour upsampling: target pixel ``(y, x)`` copies source ``(y // 2, x // 2)``."""
    values = np.asarray(values)
    if values.shape[:2] == tuple(shape):
        return values.copy()
    ys = np.arange(shape[0]) // 2
    xs = np.arange(shape[1]) // 2
    if ys[-1] >= values.shape[0] or xs[-1] >= values.shape[1]:
        raise InvalidInputError(f"cannot upscale {values.shape[:2]} to {shape}")
    return values[ys[:, None], xs[None, :]]


def refine_range(prior_depth: np.ndarray, depth_range: tuple[float, float], radius) -> SamplingRange:
    """Per-pixel interval ``prior +- radius`` clipped to the global range; full range where the prior is invalid."""
    d_min, d_max = depth_range
    prior = np.asarray(prior_depth, dtype=np.float64)
    radius = np.broadcast_to(np.asarray(radius, dtype=np.float64), prior.shape)
    valid = np.isfinite(prior) & (prior > 0) & np.isfinite(radius)
    lo = np.where(valid, np.clip(prior - np.where(valid, radius, 0.0), d_min, d_max), d_min)
    hi = np.where(valid, np.clip(prior + np.where(valid, radius, 0.0), d_min, d_max), d_max)
    return SamplingRange(lo, hi)


def plane_spacing_radius(prior_depth: np.ndarray, planes: PlaneSet, intrinsics: Intrinsics, factor: float) -> np.ndarray:
    """``factor`` times the depth gap between neighbouring planes at each pixel's prior depth."""
    rays = intrinsics.pixel_rays()
    gain = -1.0 / (rays @ planes.normal)  # depth = delta * gain
    if len(planes) == 1:
        return np.full(prior_depth.shape, np.inf)
    gaps = -np.diff(planes.deltas)
    mids = np.arange(gaps.size) + 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        idx = planes.fractional_index(np.asarray(prior_depth) / gain)
    local = np.interp(idx, mids, gaps)
    return factor * local * gain


def median_valid(depth: np.ndarray, size: int = 5) -> np.ndarray:
    """Median over the valid pixels of each window; invalid when fewer than half of the window is valid."""
    if size == 1:
        return depth.copy()
    r = size // 2
    valid = np.isfinite(depth) & (depth > 0)
    padded = np.pad(np.where(valid, depth, np.nan), r, constant_values=np.nan)
    inside = np.pad(np.ones(depth.shape), r)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (size, size))
    n_valid = ndimage.correlate(valid.astype(np.int64), np.ones((size, size), dtype=np.int64), mode="constant")
    n_inside = np.lib.stride_tricks.sliding_window_view(inside, (size, size)).sum(axis=(-1, -2))
    enough = (n_valid * 2 >= n_inside) & (n_valid > 0)
    out = np.zeros_like(depth, dtype=np.float64)
    if enough.any():
        yy, xx = np.nonzero(enough)
        out[yy, xx] = np.nanmedian(windows[yy, xx].reshape(yy.size, -1), axis=1)
    return out


def _check_bundle(views: Sequence[CalibratedView], bundle_size: int) -> None:
    if len(views) != bundle_size:
        raise InvalidBundleError(f"expected {bundle_size} views, got {len(views)}")
    shape = views[0].intrinsics.shape
    for v in views:
        if v.intrinsics.shape != shape or np.shape(v.image) != shape:
            raise InvalidBundleError("all views of a bundle need the same image size")


def estimate_bundle(views: Sequence[CalibratedView], config: PipelineConfig) -> BundleEstimate:
    """Depth, normal and confidence maps of the middle view of ``views``."""
    _check_bundle(views, config.bundle_size)
    mid = len(views) // 2
    pyramid = build_pyramids(views, config.pyramid_levels)
    bounds = DepthBounds(*config.depth_range)
    normal = unit(config.sweep_normal)
    prior = None
    summaries = []
    for level in range(config.pyramid_levels - 1, -1, -1):
        bundle = pyramid[level]
        ref = bundle[mid]
        K = ref.intrinsics
        centers = [v.pose.center for v in bundle]
        delta_bounds = bounding_distances(bounds, normal, ref.camera, centers)
        partner = sweep_partner(centers, mid)
        planes = plane_distances(ref.camera, bundle[partner].camera, delta_bounds, normal, config.max_planes)

        if prior is None:
            ranges = SamplingRange.uniform(K.shape, *config.depth_range)
            prior_depth = prior_normals = None
        else:
            prior_depth = upscale_nearest(prior[0], K.shape)
            prior_normals = upscale_nearest(prior[1], K.shape)
            if config.range_radius is None:
                radius = plane_spacing_radius(prior_depth, prior[2], K, config.range_radius_factor)
            else:
                radius = config.range_radius
            ranges = refine_range(prior_depth, config.depth_range, radius)

        volume = sweep_cost_volume(bundle, planes, ranges, config.matcher, ref_index=mid, threads=config.threads)
        variant = config.sgm.variant
        if variant == "surface-normal" and prior is None:
            variant = "plane"  # no normals exist before the coarsest level is solved
        sgm_cfg = replace(config.sgm, variant=variant, penalty_scale=float(mid))
        aggregated = aggregate(
            volume,
            ref.image,
            sgm_cfg,
            intrinsics=K,
            prior_normals=prior_normals,
            prior_depth=prior_depth,
            threads=config.threads,
        )
        depth = refine_depths(aggregated, wta(aggregated), K)
        depth = median_valid(depth, config.median_size)
        normals = smooth_normals(normals_from_depth(depth, K), ref.image, config.normal_radius)
        conf = confidence(normals, normal, config.rho_deg)
        summaries.append(
            LevelSummary(level, K.shape, len(planes), int(volume.count.max()), float((depth > 0).mean()))
        )
        logger.info("level %d: %dx%d, %d planes, %d slots max", level, K.width, K.height, len(planes), volume.count.max())
        prior = (depth, normals, planes)
    return BundleEstimate(prior[0], prior[1], conf, mid, summaries)


def select_bundles(n_frames: int, bundle_size: int, mode: str = "overlap", stride: int = 1) -> list[list[int]]:
    """Frame indices of consecutive bundles from a sequence.

    ``overlap`` advances by ``stride`` frames, so consecutive bundles share
    ``bundle_size - stride`` frames; ``disjoint`` uses every frame once.
    """
    if bundle_size < 3 or bundle_size % 2 == 0:
        raise ConfigurationError(f"bundle size must be odd and at least 3, got {bundle_size}")
    if mode == "disjoint":
        stride = bundle_size
    elif mode != "overlap":
        raise ConfigurationError(f"unknown bundle mode {mode!r}")
    if stride < 1:
        raise ConfigurationError("stride must be positive")
    return [list(range(s, s + bundle_size)) for s in range(0, n_frames - bundle_size + 1, stride)]
