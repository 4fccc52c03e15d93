"""Normal maps from depth maps, edge-aware normal smoothing and orientation-based confidence.

Conventions: depth 0 marks an invalid pixel, normal (0, 0, 0) marks an
invalid normal, and valid normals point towards the camera (z <= 0).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInputError
from .geometry import Intrinsics, unit

VIEW_DIRECTION = np.array([0.0, 0.0, -1.0])


def normals_from_depth(depth: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Per-pixel normals from the cross product of central differences of back-projected points.

    A pixel gets a normal only if it and its four direct neighbours have a
    valid depth; border pixels are therefore invalid.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != intrinsics.shape:
        raise InvalidInputError(f"depth map of shape {depth.shape} does not match intrinsics {intrinsics.shape}")
    valid = np.isfinite(depth) & (depth > 0)
    points = np.where(valid, depth, 0.0)[..., None] * intrinsics.pixel_rays()
    normals = np.zeros(depth.shape + (3,))
    if depth.shape[0] < 3 or depth.shape[1] < 3:
        return normals
    h = points[1:-1, 2:] - points[1:-1, :-2]
    v = points[2:, 1:-1] - points[:-2, 1:-1]
    n = np.cross(h, v)
    ok = valid[1:-1, 1:-1] & valid[1:-1, 2:] & valid[1:-1, :-2] & valid[2:, 1:-1] & valid[:-2, 1:-1]
    length = np.linalg.norm(n, axis=-1)
    ok &= length > 0
    n = n / np.where(ok, length, 1.0)[..., None]
    n = np.where((n[..., 2] > 0)[..., None], -n, n)
    normals[1:-1, 1:-1] = np.where(ok[..., None], n, 0.0)
    return normals


def smooth_normals(raw: np.ndarray, image: np.ndarray, radius: int = 2, beta: float = 10.0) -> np.ndarray:
    """Gaussian-weighted normal averaging that is damped across intensity edges.

    Each valid normal is replaced by the renormalised sum of itself and its
    window neighbours, the neighbours weighted by a spatial Gaussian with
    sigma equal to ``radius`` times ``exp(-|I(q) - I(p)| / beta)``.  Invalid
    neighbours contribute nothing; invalid centres stay invalid.
    """
    if radius < 1:
        raise ValueError("smoothing radius must be at least 1")
    raw = np.asarray(raw, dtype=np.float64)
    img = np.asarray(image, dtype=np.float64)
    rows, cols = img.shape
    valid = np.any(raw != 0, axis=-1)
    sigma2 = float(radius * radius)
    norm = 1.0 / math.sqrt(2.0 * math.pi * sigma2)
    pad_n = np.pad(raw, ((radius, radius), (radius, radius), (0, 0)))
    pad_i = np.pad(img, radius, mode="edge")
    total = raw.copy()
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            nq = pad_n[radius + dy : radius + dy + rows, radius + dx : radius + dx + cols]
            iq = pad_i[radius + dy : radius + dy + rows, radius + dx : radius + dx + cols]
            w = norm * np.exp(-(dx * dx + dy * dy) / (2.0 * sigma2) - np.abs(iq - img) / beta)
            total += w[..., None] * nq
    length = np.linalg.norm(total, axis=-1)
    keep = length > 1e-12
    out = np.where(keep[..., None], total / np.where(keep, length, 1.0)[..., None], raw)
    return np.where(valid[..., None], out, 0.0)


def confidence(normals: np.ndarray, sweep_normal=VIEW_DIRECTION, rho_deg: float = 60.0) -> np.ndarray:
    """Orientation confidence in [0, 1].

    ``(<n, m> <m, v> - cos(rho)) / (1 - cos(rho))`` with ``m`` the sweep normal
    and ``v`` the reversed viewing direction, or 0 once either enclosed angle
    exceeds ``rho``.  Invalid normals score 0.
    """
    normals = np.asarray(normals, dtype=np.float64)
    m = unit(sweep_normal)
    cos_rho = math.cos(math.radians(rho_deg))
    valid = np.any(normals != 0, axis=-1)
    a = normals @ m
    b = float(m @ VIEW_DIRECTION)
    tol = 1e-12
    inside = valid & (a >= cos_rho - tol) & (b >= cos_rho - tol)
    score = np.clip((a * b - cos_rho) / (1.0 - cos_rho), 0.0, 1.0)
    return np.where(inside, score, 0.0)
