"""8-bit RGB renderings of depth, normal and confidence maps."""

from __future__ import annotations

import numpy as np
from matplotlib import colormaps

from .errors import InvalidInputError

DEPTH_COLORMAP = "viridis"


def colorize_depth(depth: np.ndarray, depth_range: tuple[float, float] | None = None) -> np.ndarray:
    """Viridis over ``depth_range`` (the valid min/max when omitted); invalid pixels are black."""
    depth = np.asarray(depth, dtype=np.float64)
    valid = np.isfinite(depth) & (depth > 0)
    rgb = np.zeros(depth.shape + (3,), dtype=np.uint8)
    if not valid.any():
        return rgb
    lo, hi = depth_range if depth_range is not None else (depth[valid].min(), depth[valid].max())
    span = hi - lo if hi > lo else 1.0
    t = np.clip((depth[valid] - lo) / span, 0.0, 1.0)
    rgb[valid] = colormaps[DEPTH_COLORMAP](t, bytes=True)[:, :3]
    return rgb


def colorize_normals(normals: np.ndarray) -> np.ndarray:
    """Each component mapped from [-1, 1] to [0, 255]; all-zero (invalid) normals stay black."""
    normals = np.asarray(normals, dtype=np.float64)
    rgb = np.floor((np.clip(normals, -1.0, 1.0) + 1.0) / 2.0 * 255.0 + 0.5).astype(np.uint8)
    rgb[~np.any(normals != 0, axis=-1)] = 0
    return rgb


def colorize_confidence(conf: np.ndarray) -> np.ndarray:
    grey = np.rint(np.clip(np.nan_to_num(np.asarray(conf, dtype=np.float64)), 0.0, 1.0) * 255.0).astype(np.uint8)
    return np.repeat(grey[..., None], 3, axis=-1)


def colorize(values: np.ndarray, kind: str, depth_range: tuple[float, float] | None = None) -> np.ndarray:
    if kind == "depth":
        return colorize_depth(values, depth_range)
    if kind == "normal":
        return colorize_normals(values)
    if kind == "confidence":
        return colorize_confidence(values)
    raise InvalidInputError(f"unknown map kind {kind!r}")
