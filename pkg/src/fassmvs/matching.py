"""Photometric costs and the plane-sweep multi-image matcher.

The sweep produces a *dynamic* cost volume: every pixel owns a contiguous
slice of the global plane list (its sampling range), stored as ``count``
slots starting at global plane index ``offset``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, InvalidBundleError, InvalidInputError
from .geometry import CalibratedView, Intrinsics, PlaneSet, plane_homographies

logger = logging.getLogger(__name__)

MAX_IMAGE_COST = 255
INVALID_COST = np.iinfo(np.uint32).max

_SUPPORTED_WINDOWS = {
    "census": {(5, 5), (9, 7)},
    "ncc": {(5, 5), (9, 9)},
}
_VAR_EPS = 1e-6


@dataclass(frozen=True)
class CostFunctionSpec:
    """Similarity measure and its support window ``(width, height)``."""

    kind: str = "ncc"
    window: tuple[int, int] = (5, 5)

    def __post_init__(self) -> None:
        if self.kind not in _SUPPORTED_WINDOWS:
            raise ConfigurationError(f"unknown cost function {self.kind!r}")
        w, h = self.window
        if w % 2 == 0 or h % 2 == 0:
            raise ConfigurationError(f"window dimensions must be odd, got {w}x{h}")
        if self.kind == "census" and w * h - 1 > 64:
            raise ConfigurationError(f"census window {w}x{h} needs more than 64 bits")
        if tuple(self.window) not in _SUPPORTED_WINDOWS[self.kind]:
            supported = ", ".join(f"{a}x{b}" for a, b in sorted(_SUPPORTED_WINDOWS[self.kind]))
            raise ConfigurationError(f"{self.kind} supports windows {supported}, got {w}x{h}")

    @classmethod
    def parse(cls, name: str) -> "CostFunctionSpec":
        """Parse names such as ``ncc5x5`` or ``census9x7``."""
        for kind in _SUPPORTED_WINDOWS:
            if name.startswith(kind):
                try:
                    w, h = (int(v) for v in name[len(kind):].split("x"))
                except ValueError:
                    break
                return cls(kind, (w, h))
        raise ConfigurationError(f"cannot parse matcher name {name!r}")

    @property
    def name(self) -> str:
        return f"{self.kind}{self.window[0]}x{self.window[1]}"

    @property
    def bits(self) -> int:
        return self.window[0] * self.window[1] - 1


@dataclass(frozen=True, eq=False)
class SamplingRange:
    """Per-pixel depth interval that the sweep has to cover."""

    d_min: np.ndarray
    d_max: np.ndarray

    @classmethod
    def uniform(cls, shape: tuple[int, int], d_min: float, d_max: float) -> "SamplingRange":
        return cls(np.full(shape, float(d_min)), np.full(shape, float(d_max)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.d_min.shape


@dataclass(eq=False)
class CostVolume:
    """Dynamic per-pixel cost lists over a shared plane set.

    ``costs[y, x, s]`` is the cost of plane ``offset[y, x] + s`` for
    ``s < count[y, x]``; the remaining slots hold ``INVALID_COST``.
    """

    costs: np.ndarray
    offset: np.ndarray
    count: np.ndarray
    planes: PlaneSet

    @classmethod
    def from_dense(cls, costs: np.ndarray, planes: PlaneSet | None = None) -> "CostVolume":
        costs = np.asarray(costs)
        h, w, p = costs.shape
        if planes is None:
            planes = PlaneSet(np.array([0.0, 0.0, -1.0]), np.arange(p, 0, -1, dtype=np.float64))
        return cls(
            costs.astype(np.uint32),
            np.zeros((h, w), dtype=np.int32),
            np.full((h, w), p, dtype=np.int32),
            planes,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.offset.shape

    @property
    def valid(self) -> np.ndarray:
        return self.count > 0

    def cost_list(self, y: int, x: int) -> list[tuple[int, int]]:
        o, c = int(self.offset[y, x]), int(self.count[y, x])
        return [(o + s, int(self.costs[y, x, s])) for s in range(c)]

    def dense(self, fill: int = INVALID_COST) -> np.ndarray:
        """Expand to a ``(H, W, P)`` array over the full plane list."""
        h, w = self.shape
        out = np.full((h, w, len(self.planes)), fill, dtype=self.costs.dtype)
        slots = np.arange(self.costs.shape[2])
        yy, xx, ss = np.nonzero(slots[None, None, :] < self.count[:, :, None])
        out[yy, xx, self.offset[yy, xx] + ss] = self.costs[yy, xx, ss]
        return out


def census_transform(image: np.ndarray, window: tuple[int, int] = (5, 5)) -> np.ndarray:
    """Census bit-strings over a ``(width, height)`` window, packed into uint64.

    Neighbours are visited in row-major order with the centre skipped; the
    first neighbour ends up in the most significant used bit.  A bit is set
    when the neighbour is darker than the centre.  Image borders are handled
    by edge clamping.
    """
    w, h = window
    if w % 2 == 0 or h % 2 == 0 or w * h - 1 > 64:
        raise ConfigurationError(f"invalid census window {w}x{h}")
    rw, rh = w // 2, h // 2
    img = np.asarray(image)
    rows, cols = img.shape
    padded = np.pad(img, ((rh, rh), (rw, rw)), mode="edge")
    code = np.zeros(img.shape, dtype=np.uint64)
    one = np.uint64(1)
    for dy in range(-rh, rh + 1):
        for dx in range(-rw, rw + 1):
            if dx == 0 and dy == 0:
                continue
            neighbour = padded[rh + dy : rh + dy + rows, rw + dx : rw + dx + cols]
            code = (code << one) | (neighbour < img).astype(np.uint64)
    return code


def hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.bitwise_xor(a, b))


def _ncc_from_sums(sx, sy, sxx, syy, sxy, n: int) -> np.ndarray:
    vx = sxx - sx * sx / n
    vy = syy - sy * sy / n
    cov = sxy - sx * sy / n
    flat = (vx <= _VAR_EPS * n) | (vy <= _VAR_EPS * n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ncc = cov / np.sqrt(vx * vy)
    cost = np.rint(MAX_IMAGE_COST * np.clip(1.0 - ncc, 0.0, 1.0))
    return np.where(flat, MAX_IMAGE_COST, cost).astype(np.uint16)


def ncc_cost(patch_ref: np.ndarray, patch_k: np.ndarray) -> int:
    """Truncated, scaled NCC dissimilarity in ``[0, 255]``.

    ``round(255 * min(1 - NCC, 1))``: identical (or positively affine
    related) patches cost 0, anti- or uncorrelated patches saturate at 255.
    Patches without variance are uninformative and also cost 255.
    """
    a = np.asarray(patch_ref, dtype=np.float64).ravel()
    b = np.asarray(patch_k, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size == 0:
        raise InvalidInputError("patches must be non-empty and of equal size")
    return int(_ncc_from_sums(a.sum(), b.sum(), a @ a, b @ b, a @ b, a.size))


def _box_sum(a: np.ndarray, window: tuple[int, int]) -> np.ndarray:
    ones_x = np.ones(window[0])
    ones_y = np.ones(window[1])
    out = ndimage.correlate1d(a, ones_x, axis=1, mode="nearest")
    return ndimage.correlate1d(out, ones_y, axis=0, mode="nearest")


def warp_image(
    image: np.ndarray,
    H: np.ndarray,
    shape: tuple[int, int],
    rows: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``image`` at ``H @ (x, y, 1)`` for every pixel of a ``shape`` grid.

    Returns bilinearly interpolated values and a mask of samples that fall
    inside the source image.  ``rows`` restricts the grid to ``[r0, r1)``.
    """
    r0, r1 = rows if rows is not None else (0, shape[0])
    ys, xs = np.mgrid[r0:r1, 0 : shape[1]].astype(np.float64)
    u = H[0, 0] * xs + H[0, 1] * ys + H[0, 2]
    v = H[1, 0] * xs + H[1, 1] * ys + H[1, 2]
    w = H[2, 0] * xs + H[2, 1] * ys + H[2, 2]
    front = w > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(front, u / w, -1.0)
        v = np.where(front, v / w, -1.0)
    src_h, src_w = image.shape
    valid = front & (u >= 0) & (u <= src_w - 1) & (v >= 0) & (v <= src_h - 1)
    values = ndimage.map_coordinates(
        np.asarray(image, dtype=np.float64), [v, u], order=1, mode="nearest", prefilter=False
    )
    return values, valid


def _window_valid(valid: np.ndarray, window: tuple[int, int]) -> np.ndarray:
    return ndimage.minimum_filter(valid.astype(np.uint8), size=(window[1], window[0]), mode="nearest").astype(bool)


class _Matcher:
    """Reference-side precomputation for one cost function."""

    def __init__(self, ref: np.ndarray, spec: CostFunctionSpec):
        self.spec = spec
        self.ref = np.asarray(ref, dtype=np.float64)
        self.n = spec.window[0] * spec.window[1]
        if spec.kind == "ncc":
            self.sx = _box_sum(self.ref, spec.window)
            self.sxx = _box_sum(self.ref * self.ref, spec.window)
        else:
            self.census = census_transform(self.ref, spec.window)

    def costs(self, warped: np.ndarray, valid: np.ndarray, band: tuple[int, int]) -> np.ndarray:
        """Per-pixel cost of one warped matching image over the row band."""
        b0, b1 = band
        win = self.spec.window
        if self.spec.kind == "ncc":
            ref = self.ref[b0:b1]
            cost = _ncc_from_sums(
                self.sx[b0:b1],
                _box_sum(warped, win),
                self.sxx[b0:b1],
                _box_sum(warped * warped, win),
                _box_sum(ref * warped, win),
                self.n,
            )
        else:
            dist = hamming(self.census[b0:b1], census_transform(warped, win)).astype(np.float64)
            cost = np.rint(dist * (MAX_IMAGE_COST / self.spec.bits)).astype(np.uint16)
        return np.where(_window_valid(valid, win), cost, MAX_IMAGE_COST).astype(np.uint16)


def plane_slots(ranges: SamplingRange, planes: PlaneSet, intrinsics: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ``(offset, count)`` of planes whose induced depth lies inside the range."""
    rays = intrinsics.pixel_rays()
    denom = rays @ planes.normal
    usable = denom < -1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(usable, -1.0 / denom, np.nan)  # depth = delta * g
        hi = ranges.d_max / g * (1 + 1e-9)
        lo = ranges.d_min / g * (1 - 1e-9)
    ok = usable & np.isfinite(hi) & np.isfinite(lo) & (ranges.d_min <= ranges.d_max)
    neg = -planes.deltas
    offset = np.searchsorted(neg, np.where(ok, -hi, 0.0), side="left")
    end = np.searchsorted(neg, np.where(ok, -lo, 0.0), side="right")
    count = np.where(ok, np.maximum(end - offset, 0), 0)
    offset = np.where(count > 0, offset, 0)
    return offset.astype(np.int32), count.astype(np.int32)


def sweep_cost_volume(
    views: Sequence[CalibratedView],
    planes: PlaneSet,
    ranges: SamplingRange,
    costfn: CostFunctionSpec,
    ref_index: int | None = None,
    threads: int = 1,
) -> CostVolume:
    """Plane-sweep matching of a bundle against its middle view.

    For every plane inside a pixel's sampling range, each matching image is
    warped into the reference through the plane-induced homography and
    scored; per-image costs are summed separately over the views left and
    right of the reference and the smaller sum is stored (occlusion
    handling).  Warps leaving the matching image cost 255 for that image.
    """
    n_views = len(views)
    if n_views < 3 or n_views % 2 == 0:
        raise InvalidBundleError(f"bundle size must be odd and at least 3, got {n_views}")
    if ref_index is None:
        ref_index = n_views // 2
    left = list(views[:ref_index])
    right = list(views[ref_index + 1 :])
    if not left or not right:
        raise InvalidBundleError("need at least one matching image on each side of the reference")
    ref = views[ref_index]
    K = ref.intrinsics
    if ranges.shape != K.shape:
        raise InvalidInputError("sampling range does not match the reference image size")

    offset, count = plane_slots(ranges, planes, K)
    height, width = K.shape
    slots = max(int(count.max()), 1)
    costs = np.full((height, width, slots), INVALID_COST, dtype=np.uint32)

    matcher = _Matcher(ref.image, costfn)
    homs_left = [plane_homographies(planes, ref.camera, v.camera) for v in left]
    homs_right = [plane_homographies(planes, ref.camera, v.camera) for v in right]
    images_left = [np.asarray(v.image, dtype=np.float64) for v in left]
    images_right = [np.asarray(v.image, dtype=np.float64) for v in right]
    half = costfn.window[1] // 2

    def side_cost(images, homs, i, band):
        total = None
        for img, hs in zip(images, homs):
            warped, valid = warp_image(img, hs[i], (height, width), band)
            c = matcher.costs(warped, valid, band).astype(np.uint32)
            total = c if total is None else total + c
        return total

    def work(i: int):
        mask = (offset <= i) & (i < offset + count)
        rows = np.flatnonzero(mask.any(axis=1))
        if rows.size == 0:
            return None
        y0, y1 = int(rows[0]), int(rows[-1]) + 1
        band = (max(0, y0 - half), min(height, y1 + half))
        s = np.minimum(side_cost(images_left, homs_left, i, band), side_cost(images_right, homs_right, i, band))
        return i, y0, mask[y0:y1], s[y0 - band[0] : y1 - band[0]]

    def scatter(result) -> None:
        if result is None:
            return
        i, y0, mask, s = result
        yy, xx = np.nonzero(mask)
        costs[yy + y0, xx, i - offset[yy + y0, xx]] = s[yy, xx]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(work, range(len(planes))):
                scatter(result)
    else:
        for i in range(len(planes)):
            scatter(work(i))
    logger.debug("swept %d planes over %dx%d pixels (max %d slots)", len(planes), width, height, slots)
    return CostVolume(costs, offset, count, planes)
