"""Outlier removal: a texture mask from the reference image and a multi-view consistency check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, InvalidInputError
from .geometry import Intrinsics, Pose

DOG_SIGMA = 1.4  # the usual default sigma for a 7x7 Gaussian kernel
DOG_RADIUS = 3
DOG_THRESHOLD = 0.5
MIN_ACTIVE_AREA = 7
MIN_INACTIVE_AREA = 21

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def _remove_small(mask: np.ndarray, min_size: int) -> np.ndarray:
    labels, count = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if count == 0:
        return mask.copy()
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels]


def dog_mask(image: np.ndarray) -> np.ndarray:
    """True where the reference image carries enough local texture to trust a depth estimate.

    The absolute difference between the image and its 7x7 Gaussian blur is
    thresholded at half a grey level, small active specks are dropped, the
    mask is dilated by one pixel and small inactive holes are filled.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError("texture mask needs a single-channel image")
    smooth = ndimage.gaussian_filter(img, DOG_SIGMA, mode="mirror", radius=DOG_RADIUS)
    active = np.abs(img - smooth) > DOG_THRESHOLD
    active = _remove_small(active, MIN_ACTIVE_AREA)
    active = ndimage.binary_dilation(active, structure=np.ones((3, 3), dtype=bool))
    holes = _remove_small(~active, MIN_INACTIVE_AREA)
    return ~holes


def apply_mask(depth: np.ndarray, normals: np.ndarray | None, conf: np.ndarray | None, keep: np.ndarray):
    """Set every map to its invalid value (zeros) wherever ``keep`` is false."""
    keep = np.asarray(keep, dtype=bool)
    depth = np.where(keep, depth, 0.0)
    if normals is not None:
        normals = np.where(keep[..., None], normals, 0.0)
    if conf is not None:
        conf = np.where(keep, conf, 0.0)
    return depth, normals, conf


@dataclass(eq=False)
class ConsistencyWindow:
    """Depth maps of consecutive frames plus their cameras; ``ref_index`` is filtered."""

    depths: list[np.ndarray]
    cameras: list[tuple[Intrinsics, Pose]]
    ref_index: int | None = field(default=None)

    def __post_init__(self) -> None:
        if len(self.depths) != len(self.cameras):
            raise InvalidInputError("every depth map needs a camera")
        if len(self.depths) < 2:
            raise ConfigurationError("a consistency window needs at least two views")
        if self.ref_index is None:
            self.ref_index = len(self.depths) // 2
        if not 0 <= self.ref_index < len(self.depths):
            raise InvalidInputError("reference index outside the window")
        for d, (K, _) in zip(self.depths, self.cameras):
            if np.shape(d) != K.shape:
                raise InvalidInputError("depth map size does not match its intrinsics")


def window_bounds(n_frames: int, size: int) -> list[tuple[int, int, int]]:
    """``(start, stop, ref)`` per frame: windows centred where possible, shifted inwards at the ends."""
    size = min(size, n_frames)
    out = []
    for i in range(n_frames):
        start = min(max(i - size // 2, 0), n_frames - size)
        out.append((start, start + size, i))
    return out


def _lookup(depth: np.ndarray, u: np.ndarray, v: np.ndarray, mode: str) -> np.ndarray:
    h, w = depth.shape
    if mode == "nearest":
        xi = np.floor(u + 0.5).astype(np.int64)
        yi = np.floor(v + 0.5).astype(np.int64)
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        return np.where(inside, depth[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], 0.0)
    inside = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    x0 = np.clip(np.floor(u).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(v).astype(np.int64), 0, max(h - 2, 0))
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    fx, fy = u - x0, v - y0
    corners = [depth[y0, x0], depth[y0, x1], depth[y1, x0], depth[y1, x1]]
    all_valid = np.logical_and.reduce([c > 0 for c in corners])
    value = (corners[0] * (1 - fx) + corners[1] * fx) * (1 - fy) + (corners[2] * (1 - fx) + corners[3] * fx) * fy
    return np.where(inside & all_valid, value, 0.0)


def reprojection_errors(window: ConsistencyWindow, lookup: str = "nearest") -> np.ndarray:
    """Round-trip pixel error of every reference pixel through every other view.

    Shape ``(n_views - 1, H, W)`` in window order without the reference;
    ``inf`` where the round trip fails (invalid depth, behind a camera or
    outside the neighbouring map).
    """
    if lookup not in ("nearest", "bilinear"):
        raise ConfigurationError(f"unknown depth lookup {lookup!r}")
    ref = window.ref_index
    K_ref, P_ref = window.cameras[ref]
    d_ref = np.asarray(window.depths[ref], dtype=np.float64)
    h, w = d_ref.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    valid = np.isfinite(d_ref) & (d_ref > 0)
    world = P_ref.to_world(np.where(valid, d_ref, 1.0)[..., None] * K_ref.pixel_rays())
    errors = []
    for k, (depth_k, (K_k, P_k)) in enumerate(zip(window.depths, window.cameras)):
        if k == ref:
            continue
        cam = P_k.to_camera(world)
        z = cam[..., 2]
        front = z > 1e-12
        zs = np.where(front, z, 1.0)
        u = K_k.fx * cam[..., 0] / zs + K_k.cx
        v = K_k.fy * cam[..., 1] / zs + K_k.cy
        d_k = _lookup(np.asarray(depth_k, dtype=np.float64), u, v, lookup)
        hit_ok = valid & front & (d_k > 0) & np.isfinite(d_k)
        rays_k = np.stack([(u - K_k.cx) / K_k.fx, (v - K_k.cy) / K_k.fy, np.ones_like(u)], axis=-1)
        back = P_ref.to_camera(P_k.to_world(np.where(hit_ok, d_k, 1.0)[..., None] * rays_k))
        bz = back[..., 2]
        hit_ok &= bz > 1e-12
        bzs = np.where(hit_ok, bz, 1.0)
        pu = K_ref.fx * back[..., 0] / bzs + K_ref.cx
        pv = K_ref.fy * back[..., 1] / bzs + K_ref.cy
        err = np.hypot(pu - xs, pv - ys)
        errors.append(np.where(hit_ok, err, np.inf))
    return np.stack(errors)


def geometric_filter(
    window: ConsistencyWindow,
    eta_r: float = 10.0,
    eta_h: int = 3,
    lookup: str = "nearest",
) -> np.ndarray:
    """Keep-mask of reference pixels that round-trip within ``eta_r`` px through at least ``eta_h`` other views."""
    if len(window.depths) < eta_h + 1:
        raise ConfigurationError(
            f"a window of {len(window.depths)} views cannot reach {eta_h} consistent neighbours"
        )
    hits = (reprojection_errors(window, lookup) < eta_r).sum(axis=0)
    d_ref = np.asarray(window.depths[window.ref_index])
    return (hits >= eta_h) & (d_ref > 0)
