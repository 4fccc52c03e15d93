"""Semi-global aggregation over plane-sweep cost volumes.

Three smoothness models share one path recurrence and differ only in the
per-pixel index offset that moves the zero-cost transition:

* ``plane``: no offset, jumps between neighbouring plane indices are penalised.
* ``surface-normal``: offsets precomputed from a prior normal map, so that
  surfaces tangent to the prior normal become free of penalty.
* ``path-gradient``: offsets predicted on the fly from the scene-space slope
  of the running minimum along each path.

All arithmetic is integer (int64 during a path, uint32 in the result), so
aggregation is exact and independent of the thread schedule.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .geometry import Intrinsics, PlaneSet, depth_from_plane, ray_plane_depth
from .matching import INVALID_COST, CostVolume

__all__ = [
    "PATHS_4",
    "PATHS_8",
    "SgmConfig",
    "adaptive_penalty",
    "aggregate",
    "compute_normal_offsets",
    "depth_from_plane",
    "index_to_depth",
    "parabola_refine",
    "refine_depths",
    "wta",
]

# (dx, dy): direction of travel; the predecessor of p is p - r.
PATHS_8: tuple[tuple[int, int], ...] = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1))
PATHS_4: tuple[tuple[int, int], ...] = PATHS_8[:4]

VARIANTS = ("plane", "surface-normal", "path-gradient")
PG_MAX_OFFSET = 3
_INF = np.int64(1) << 40


@dataclass(frozen=True)
class SgmConfig:
    """Smoothness model and penalties.

    ``phi2`` is either ``"adaptive"`` (intensity-dependent, see
    :func:`adaptive_penalty`) or a fixed number.  Both penalties are multiplied
    by ``penalty_scale`` (the number of images summed per side) and rounded to
    integers before use.
    """

    variant: str = "plane"
    paths: int = 8
    phi1: float = 100.0
    phi2: float | str = "adaptive"
    alpha: float = 8.0
    beta: float = 10.0
    penalty_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown SGM variant {self.variant!r}")
        if self.paths not in (4, 8):
            raise ConfigurationError(f"paths must be 4 or 8, got {self.paths}")
        if not (self.phi1 >= 0 and math.isfinite(self.phi1)):
            raise ConfigurationError("phi1 must be a finite non-negative number")
        if isinstance(self.phi2, str):
            if self.phi2 != "adaptive":
                raise ConfigurationError(f"phi2 must be 'adaptive' or a number, got {self.phi2!r}")
            if self.alpha < 0 or self.beta <= 0:
                raise ConfigurationError("adaptive penalty needs alpha >= 0 and beta > 0")
        elif not (math.isfinite(self.phi2) and self.phi2 >= self.phi1):
            raise ConfigurationError("a fixed phi2 must be finite and not smaller than phi1")
        if not self.penalty_scale > 0:
            raise ConfigurationError("penalty_scale must be positive")

    @property
    def directions(self) -> tuple[tuple[int, int], ...]:
        return PATHS_8 if self.paths == 8 else PATHS_4


def adaptive_penalty(phi1: float, intensity_diff, alpha: float = 8.0, beta: float = 10.0):
    """Large-jump penalty that relaxes across intensity edges.

    Equals ``phi1 * (1 + alpha)`` on flat image regions and decays towards
    ``phi1`` as the absolute intensity difference grows.
    """
    return phi1 * (1.0 + alpha * np.exp(-np.abs(intensity_diff) / beta))


def _plane_index(planes: PlaneSet, delta: np.ndarray) -> np.ndarray:
    """Fractional plane index, extrapolated linearly beyond the stack ends."""
    d = planes.deltas
    delta = np.asarray(delta, dtype=np.float64)
    if d.size == 1:
        return np.zeros_like(delta)
    idx = planes.fractional_index(delta)
    before = (d[0] - delta) / (d[0] - d[1])
    after = (d.size - 1) + (d[-1] - delta) / (d[-2] - d[-1])
    return np.where(delta > d[0], before, np.where(delta < d[-1], after, idx))


def compute_normal_offsets(
    prior_normals: np.ndarray,
    prior_depth: np.ndarray,
    planes: PlaneSet,
    intrinsics: Intrinsics,
    directions: Sequence[tuple[int, int]] = PATHS_8,
) -> np.ndarray:
    """Per-direction index offsets that align the zero-cost transition with a prior surface.

    For pixel ``p`` the scene point ``P`` is taken from ``prior_depth`` and the
    surface is approximated by the plane through ``P`` with normal
    ``prior_normals[p]``.  The rays through ``p - r`` and ``p + r`` are
    intersected with that tangent plane and the offset is half the plane-index
    difference between the two intersections, rounded to the nearest integer:
    the expected plane index of the predecessor ``p - r`` relative to the
    index at ``p``, which is where the path recurrence looks for its
    zero-cost transition.  Using the
    symmetric difference makes the offsets of ``r`` and ``-r`` exact negatives.

    Returns an int array of shape ``(len(directions), H, W)``; pixels without a
    usable normal or depth get 0.
    """
    normals = np.asarray(prior_normals, dtype=np.float64)
    depth = np.asarray(prior_depth, dtype=np.float64)
    if normals.shape != intrinsics.shape + (3,) or depth.shape != intrinsics.shape:
        raise InvalidInputError("prior maps do not match the intrinsics size")
    rays = intrinsics.pixel_rays()
    length = np.linalg.norm(normals, axis=-1)
    usable = (length > 0.5) & np.isfinite(depth) & (depth > 0) & np.isfinite(length)
    P = np.where(usable[..., None], depth[..., None] * rays, 0.0)
    support = np.einsum("hwc,hwc->hw", normals, P)
    out = np.zeros((len(directions),) + intrinsics.shape, dtype=np.int32)
    for k, (dx, dy) in enumerate(directions):
        step = intrinsics.inverse @ np.array([dx, dy, 0.0])
        idx = []
        for sign in (-1.0, 1.0):
            ray = rays + sign * step
            denom = np.einsum("hwc,hwc->hw", normals, ray)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = support / denom
            ok = (np.abs(denom) > 1e-12) & (t > 0)
            delta = -(ray @ planes.normal) * np.where(ok, t, np.nan)
            idx.append(_plane_index(planes, delta))
        diff = 0.5 * (idx[0] - idx[1])
        good = usable & np.isfinite(diff)
        out[k] = np.where(good, np.rint(np.where(good, diff, 0.0)), 0).astype(np.int32)
    return out


@dataclass
class _PathInputs:
    cost: np.ndarray  # (H, W, K) int64, _INF in unused slots
    offset: np.ndarray
    count: np.ndarray
    image: np.ndarray
    phi1: int
    phi1_base: float
    phi2: float | str
    alpha: float
    beta: float
    scale: float
    planes: PlaneSet
    rays: np.ndarray | None  # (H, W, 3), path-gradient only
    gains: np.ndarray | None  # depth = delta * gain


def _path(inp: _PathInputs, direction: tuple[int, int], shifts: np.ndarray | None, gradient: bool) -> np.ndarray:
    """Min-normalised path costs ``L_r`` for one direction, shape (H, W, K) int64."""
    dx, dy = direction
    cost, off, cnt, img = inp.cost, inp.offset, inp.count, inp.image
    rays, gains = inp.rays, inp.gains
    if dx == 0:
        # walk rows as if they were columns
        cost = cost.transpose(1, 0, 2)
        off, cnt, img = off.T, cnt.T, img.T
        shifts = shifts.T if shifts is not None else None
        if gradient:
            rays, gains = rays.transpose(1, 0, 2), gains.T
        dx, dy = dy, dx
    H, W, K = cost.shape
    L = np.empty((H, W, K), dtype=np.int64)
    slots = np.arange(K)
    lanes = np.arange(H)
    src = lanes - dy
    has_src = (src >= 0) & (src < H)
    src = np.clip(src, 0, H - 1)
    src2 = lanes - 2 * dy
    has_src2 = (src2 >= 0) & (src2 < H)
    src2 = np.clip(src2, 0, H - 1)
    inf_col = np.full((H, 1), _INF, dtype=np.int64)
    phi2_fixed = None if isinstance(inp.phi2, str) else int(np.rint(inp.phi2 * inp.scale))
    deltas, normal = inp.planes.deltas, inp.planes.normal

    cols = range(W) if dx > 0 else range(W - 1, -1, -1)
    best = np.full((H, W), -1, dtype=np.int64)  # global argmin per visited pixel, path-gradient only
    first = True
    for x in cols:
        S = cost[:, x]
        c = cnt[:, x]
        if first:
            L[:, x] = S
            first = False
        else:
            xp = x - dx
            Lp = L[src, xp]
            op = off[src, xp].astype(np.int64)
            cp = cnt[src, xp]
            ok = has_src & (cp > 0)
            minp = Lp.min(axis=1)
            if phi2_fixed is None:
                diff = np.abs(img[:, x] - img[src, xp])
                p2 = np.rint(adaptive_penalty(inp.phi1_base, diff, inp.alpha, inp.beta) * inp.scale)
                p2 = p2.astype(np.int64)
            else:
                p2 = np.full(H, phi2_fixed, dtype=np.int64)
            if shifts is not None:
                shift = shifts[:, x].astype(np.int64)
            elif gradient:
                shift = _gradient_shift(best, src, has_src, src2, has_src2, x, dx, W, rays, gains, deltas, normal, inp.planes)
            else:
                shift = None
            target = off[:, x].astype(np.int64)[:, None] + slots[None, :]
            if shift is not None:
                target = target + shift[:, None]
            u = target - op[:, None]
            inside = (u >= 0) & (u < cp[:, None])
            padded = np.concatenate([inf_col, Lp, inf_col], axis=1)
            same = np.take_along_axis(padded, np.clip(u, -1, K) + 1, axis=1)
            below = np.take_along_axis(padded, np.clip(u - 1, -1, K) + 1, axis=1)
            above = np.take_along_axis(padded, np.clip(u + 1, -1, K) + 1, axis=1)
            jump = (minp + p2)[:, None]
            near = np.minimum(same, np.minimum(below, above) + inp.phi1)
            cand = np.where(inside, np.minimum(near, jump), jump)
            Lx = np.where(ok[:, None], S + cand - minp[:, None], S)
            L[:, x] = np.where(slots[None, :] < c[:, None], Lx, _INF)
        if gradient:
            arg = L[:, x].argmin(axis=1)
            best[:, x] = np.where(c > 0, off[:, x] + arg, -1)
    if direction[0] == 0:
        L = L.transpose(1, 0, 2)
    return L


def _gradient_shift(best, src, has_src, src2, has_src2, x, dx, W, rays, gains, deltas, normal, planes) -> np.ndarray:
    """Offset predicted by extrapolating the last two path minima in scene space."""
    x1, x2 = x - dx, x - 2 * dx
    H = best.shape[0]
    if not 0 <= x2 < W:
        return np.zeros(H, dtype=np.int64)
    i1 = best[src, x1]
    i2 = best[src2, x2]
    ok = has_src & has_src2 & (i1 >= 0) & (i2 >= 0)
    i1c, i2c = np.where(ok, i1, 0), np.where(ok, i2, 0)
    P1 = (deltas[i1c] * gains[src, x1])[:, None] * rays[src, x1]
    P2 = (deltas[i2c] * gains[src2, x2])[:, None] * rays[src2, x2]
    predicted = -((2.0 * P1 - P2) @ normal)
    step = i1c - _plane_index(planes, predicted)
    ok &= np.isfinite(step)
    step = np.clip(np.rint(np.where(ok, step, 0.0)), -PG_MAX_OFFSET, PG_MAX_OFFSET)
    return np.where(ok, step, 0).astype(np.int64)


def aggregate(
    volume: CostVolume,
    image: np.ndarray,
    config: SgmConfig,
    intrinsics: Intrinsics | None = None,
    prior_normals: np.ndarray | None = None,
    prior_depth: np.ndarray | None = None,
    threads: int = 1,
    directions: Sequence[tuple[int, int]] | None = None,
) -> CostVolume:
    """Sum of min-normalised path costs over all configured directions.

    The result shares offsets, counts and planes with ``volume``.  Transitions
    towards an index outside the predecessor's range are charged the large
    jump penalty.  ``directions`` overrides the configured path set (used to
    inspect single paths).
    """
    directions = tuple(directions) if directions is not None else config.directions
    h, w = volume.shape
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (h, w):
        raise InvalidInputError("reference image does not match the cost volume")
    shifts = None
    if config.variant == "surface-normal":
        if prior_normals is None or prior_depth is None or intrinsics is None:
            raise ConfigurationError("the surface-normal variant needs prior normals, prior depth and intrinsics")
        shifts = compute_normal_offsets(prior_normals, prior_depth, volume.planes, intrinsics, directions)
    gradient = config.variant == "path-gradient"
    rays = gains = None
    if gradient:
        if intrinsics is None:
            raise ConfigurationError("the path-gradient variant needs intrinsics")
        rays = intrinsics.pixel_rays()
        denom = rays @ volume.planes.normal
        with np.errstate(divide="ignore"):
            gains = np.where(np.abs(denom) > 1e-12, -1.0 / denom, np.nan)

    cost = volume.costs.astype(np.int64)
    cost[volume.costs == INVALID_COST] = _INF
    inp = _PathInputs(
        cost=cost,
        offset=volume.offset,
        count=volume.count,
        image=image,
        phi1=int(np.rint(config.phi1 * config.penalty_scale)),
        phi1_base=config.phi1,
        phi2=config.phi2,
        alpha=config.alpha,
        beta=config.beta,
        scale=config.penalty_scale,
        planes=volume.planes,
        rays=rays,
        gains=gains,
    )

    def run(k: int) -> np.ndarray:
        return _path(inp, directions[k], None if shifts is None else shifts[k], gradient)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(len(directions))))
    else:
        results = [run(k) for k in range(len(directions))]
    total = np.zeros_like(cost)
    for res in results:  # fixed order
        total += res
    unused = volume.costs == INVALID_COST
    if total[~unused].size and total[~unused].max() >= INVALID_COST:
        raise OverflowError("aggregated costs exceed the 32-bit range")
    out = np.where(unused, INVALID_COST, total).astype(np.uint32)
    return CostVolume(out, volume.offset, volume.count, volume.planes)


def wta(volume: CostVolume) -> np.ndarray:
    """Global plane index of the per-pixel minimum (lowest index on ties); -1 where empty."""
    arg = volume.costs.argmin(axis=2)
    return np.where(volume.valid, volume.offset + arg, -1).astype(np.int32)


def index_to_depth(indices: np.ndarray, planes: PlaneSet, intrinsics: Intrinsics) -> np.ndarray:
    """z-depth of each pixel's plane; 0 for invalid indices or rays that miss the plane."""
    valid = indices >= 0
    delta = planes.deltas[np.where(valid, indices, 0)]
    depth = ray_plane_depth(intrinsics.pixel_rays(), planes.normal, delta)
    return np.where(valid & np.isfinite(depth), depth, 0.0)


def parabola_refine(d_prev: float, d_win: float, d_next: float, c_prev: float, c_win: float, c_next: float) -> float:
    """Vertex of the parabola through three (depth, cost) samples, clamped to the outer depths."""
    return float(_parabola(np.float64(d_prev), np.float64(d_win), np.float64(d_next),
                           np.float64(c_prev), np.float64(c_win), np.float64(c_next)))


def _parabola(x0, x1, x2, y0, y1, y2):
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
        vertex = -b / (2.0 * a)
    lo, hi = np.minimum(x0, x2), np.maximum(x0, x2)
    curved = (a > 0) & np.isfinite(vertex) & (denom != 0)
    return np.where(curved, np.clip(np.where(curved, vertex, x1), lo, hi), x1)


def refine_depths(volume: CostVolume, indices: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Sub-plane depth for every pixel from the aggregated costs around its WTA index.

    Pixels whose winner sits at either end of their own range keep the plane
    depth; invalid pixels get 0.
    """
    planes = volume.planes
    depth = index_to_depth(indices, planes, intrinsics)
    slot = indices - volume.offset
    inner = (indices >= 0) & (slot >= 1) & (slot <= volume.count - 2)
    if not inner.any():
        return depth
    yy, xx = np.nonzero(inner)
    s = slot[yy, xx]
    c = volume.costs[yy, xx]
    y0 = c[np.arange(s.size), s - 1].astype(np.float64)
    y1 = c[np.arange(s.size), s].astype(np.float64)
    y2 = c[np.arange(s.size), s + 1].astype(np.float64)
    rays = intrinsics.pixel_rays()[yy, xx]
    i = indices[yy, xx]
    x0 = ray_plane_depth(rays, planes.normal, planes.deltas[i - 1])
    x1 = ray_plane_depth(rays, planes.normal, planes.deltas[i])
    x2 = ray_plane_depth(rays, planes.normal, planes.deltas[i + 1])
    refined = _parabola(x0, x1, x2, y0, y1, y2)
    depth[yy, xx] = np.where(np.isfinite(refined), refined, depth[yy, xx])
    return depth
