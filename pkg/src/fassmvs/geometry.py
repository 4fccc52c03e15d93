"""Pinhole cameras, plane-induced homographies and plane-sweep sampling.

Conventions used throughout the package:

* Camera frame is right-handed with +x right, +y down and +z along the
  viewing direction.  Pixel ``(u, v)`` refers to the centre of column ``u``,
  row ``v``.
* ``Pose.rotation`` is the world-to-camera rotation, i.e. the matrix that
  appears in ``P = K [rotation | -rotation @ center]``.
* A sweep plane ``(n, delta)`` is expressed in the reference camera frame and
  holds the points ``X`` with ``n @ X + delta = 0``.  The fronto-parallel
  sweep therefore uses ``n = (0, 0, -1)`` and ``delta`` equals the z-depth.
* Plane lists are ordered far to near (strictly decreasing ``delta``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DegenerateGeometryError, InvalidInputError

FRONTO_PARALLEL = np.array([0.0, 0.0, -1.0])

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError(f"image size must be at least 1x1, got {self.width}x{self.height}")

    @classmethod
    def from_matrix(cls, K: np.ndarray, width: int, height: int) -> "Intrinsics":
        K = np.asarray(K, dtype=np.float64)
        if K.shape != (3, 3):
            raise InvalidInputError(f"intrinsic matrix must be 3x3, got {K.shape}")
        if abs(K[0, 1]) > 1e-12 or np.any(np.abs(K[2] - [0.0, 0.0, 1.0]) > 1e-12) or abs(K[1, 0]) > 1e-12:
            raise InvalidInputError("only zero-skew pinhole intrinsics of the form [[fx,0,cx],[0,fy,cy],[0,0,1]] are supported")
        return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]), int(width), int(height))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def halved(self) -> "Intrinsics":
        """Intrinsics of the next coarser pyramid level."""
        return Intrinsics(
            self.fx / 2.0,
            self.fy / 2.0,
            self.cx / 2.0,
            self.cy / 2.0,
            (self.width + 1) // 2,
            (self.height + 1) // 2,
        )

    def corners(self) -> np.ndarray:
        """Homogeneous coordinates of the four corner pixels, shape (4, 3)."""
        w, h = self.width - 1, self.height - 1
        return np.array([[0.0, 0.0, 1.0], [w, 0.0, 1.0], [0.0, h, 1.0], [w, h, 1.0]])

    def pixel_rays(self) -> np.ndarray:
        """Per-pixel viewing rays ``K^-1 (u, v, 1)`` with unit z, shape (H, W, 3)."""
        u = (np.arange(self.width, dtype=np.float64) - self.cx) / self.fx
        v = (np.arange(self.height, dtype=np.float64) - self.cy) / self.fy
        rays = np.empty((self.height, self.width, 3))
        rays[..., 0] = u[None, :]
        rays[..., 1] = v[:, None]
        rays[..., 2] = 1.0
        return rays


@dataclass(frozen=True, eq=False)
class Pose:
    """Extrinsic orientation; ``rotation`` maps world axes into the camera frame."""

    rotation: np.ndarray
    center: np.ndarray

    def __post_init__(self) -> None:
        R = np.array(self.rotation, dtype=np.float64)
        C = np.array(self.center, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or C.shape != (3,):
            raise InvalidInputError("pose needs a 3x3 rotation and a 3-vector center")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(C)):
            raise InvalidInputError("pose contains non-finite values")
        if np.max(np.abs(R @ R.T - np.eye(3))) > _ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise InvalidInputError("rotation must be orthonormal with determinant +1")
        R.flags.writeable = False
        C.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "center", C)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.center) @ self.rotation.T

    def to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation + self.center

    def projection(self, intrinsics: Intrinsics) -> np.ndarray:
        """3x4 projection matrix ``K [R | -R C]``."""
        R = self.rotation
        return intrinsics.matrix @ np.hstack([R, (-R @ self.center)[:, None]])

    @classmethod
    def from_projection(cls, P: np.ndarray) -> tuple["Pose", np.ndarray]:
        """Decompose ``P = K [R | -R C]`` into a pose and the upper-triangular ``K``."""
        P = np.asarray(P, dtype=np.float64)
        M = P[:, :3]
        K, R = scipy.linalg.rq(M)
        signs = np.diag(np.sign(np.diag(K)))
        K = K @ signs
        R = signs @ R
        if np.linalg.det(R) < 0:
            R = -R
            K = -K
        scale = K[2, 2]
        K = K / scale
        C = -np.linalg.solve(M, P[:, 3])
        return cls(R, C), K


@dataclass(frozen=True, eq=False)
class CalibratedView:
    image: np.ndarray
    intrinsics: Intrinsics
    pose: Pose

    def __post_init__(self) -> None:
        img = np.asarray(self.image)
        if img.ndim != 2:
            raise InvalidInputError(f"expected a single-channel image, got shape {img.shape}")
        if img.shape != self.intrinsics.shape:
            raise InvalidInputError(
                f"image is {img.shape[1]}x{img.shape[0]} but intrinsics describe "
                f"{self.intrinsics.width}x{self.intrinsics.height}"
            )

    @property
    def camera(self) -> tuple[Intrinsics, Pose]:
        return (self.intrinsics, self.pose)


@dataclass(frozen=True, eq=False)
class SweepPlane:
    normal: np.ndarray
    distance: float

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise InvalidInputError("sweep plane normal must have unit length")
        if not self.distance > 0:
            raise InvalidInputError("sweep plane distance must be positive")
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True)
class DepthBounds:
    d_min: float
    d_max: float

    def __post_init__(self) -> None:
        if not (0 < self.d_min < self.d_max) or not math.isfinite(self.d_max):
            raise InvalidInputError(f"depth bounds need 0 < d_min < d_max, got [{self.d_min}, {self.d_max}]")


@dataclass(frozen=True, eq=False)
class PlaneSet:
    """Ordered family of sweep planes sharing one normal (far to near)."""

    normal: np.ndarray
    deltas: np.ndarray
    max_step_px: float = field(default=1.0)

    def __post_init__(self) -> None:
        d = np.array(self.deltas, dtype=np.float64).reshape(-1)
        if d.size == 0:
            raise InvalidInputError("plane set is empty")
        if d.size > 1 and np.any(np.diff(d) >= 0):
            raise InvalidInputError("plane distances must be strictly decreasing")
        d.flags.writeable = False
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "normal", unit(self.normal))

    def __len__(self) -> int:
        return self.deltas.size

    def fractional_index(self, delta: np.ndarray) -> np.ndarray:
        """Continuous plane index of distance(s) ``delta`` (clamped to the stack)."""
        if self.deltas.size == 1:
            return np.zeros_like(np.asarray(delta, dtype=np.float64))
        return np.interp(-np.asarray(delta, dtype=np.float64), -self.deltas, np.arange(self.deltas.size, dtype=np.float64))


def unit(v: Sequence[float] | np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(v)
    if norm == 0 or not np.isfinite(norm):
        raise InvalidInputError("cannot normalise a zero or non-finite vector")
    return v / norm


def relative_transform(ref: Pose, other: Pose) -> tuple[np.ndarray, np.ndarray]:
    """``(R, t)`` such that ``X_other = R @ X_ref + t`` for camera-frame points."""
    R = other.rotation @ ref.rotation.T
    t = other.rotation @ (ref.center - other.center)
    return R, t


def project(intrinsics: Intrinsics, points_cam: np.ndarray) -> np.ndarray:
    """Pinhole projection of camera-frame points to pixel coordinates."""
    p = np.asarray(points_cam, dtype=np.float64)
    x = p[..., 0] / p[..., 2]
    y = p[..., 1] / p[..., 2]
    return np.stack([intrinsics.fx * x + intrinsics.cx, intrinsics.fy * y + intrinsics.cy], axis=-1)


def _homographies(
    normal: np.ndarray,
    deltas: np.ndarray,
    ref: tuple[Intrinsics, Pose],
    other: tuple[Intrinsics, Pose],
) -> np.ndarray:
    K_ref, P_ref = ref
    K_k, P_k = other
    R, t = relative_transform(P_ref, P_k)
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1)
    # X_k = R X + t and n.X = -delta on the plane, hence X_k = (R - t n^T / delta) X.
    M = R[None] - (t[None, :, None] * normal[None, None, :]) / deltas[:, None, None]
    return K_k.matrix[None] @ M @ K_ref.inverse[None]


def plane_homography(
    plane: SweepPlane,
    ref: tuple[Intrinsics, Pose],
    other: tuple[Intrinsics, Pose],
) -> np.ndarray:
    """Homography mapping reference pixels to ``other`` pixels for points on ``plane``."""
    return _homographies(plane.normal, np.array([plane.distance]), ref, other)[0]


def plane_homographies(
    planes: PlaneSet,
    ref: tuple[Intrinsics, Pose],
    other: tuple[Intrinsics, Pose],
) -> np.ndarray:
    """Stack of homographies, one per plane of ``planes``; shape (P, 3, 3)."""
    return _homographies(planes.normal, planes.deltas, ref, other)


def apply_homography(H: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64)
    hom = np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)
    q = hom @ H.T
    return q[..., :2] / q[..., 2:3]


def ray_plane_depth(rays: np.ndarray, normal: np.ndarray, delta: float | np.ndarray) -> np.ndarray:
    """z-depth where unit-z rays meet the plane ``n.X + delta = 0`` (``nan`` if parallel or behind)."""
    denom = np.asarray(rays) @ np.asarray(normal)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = -np.asarray(delta) / denom
    return np.where((np.abs(denom) < 1e-12) | ~(depth > 0), np.nan, depth)


def bounding_distances(
    bounds: DepthBounds,
    normal: Sequence[float] | np.ndarray,
    ref: tuple[Intrinsics, Pose],
    centers: Sequence[np.ndarray] | np.ndarray | None = None,
) -> tuple[float, float]:
    """Distances of the bounding sweep planes that enclose the depth range.

    The reference frustum is truncated by fronto-parallel near/far planes at
    ``d_min``/``d_max``; each bound is the smallest absolute plane distance
    over the four corners on the respective truncation plane.

    ``centers`` (world coordinates) are checked against the near plane: every
    camera must lie strictly in front of it, otherwise warped images would
    flip orientation.
    """
    n = unit(normal)
    K, pose = ref
    rays = K.corners() @ K.inverse.T
    near = np.abs((rays * bounds.d_min) @ n)
    far = np.abs((rays * bounds.d_max) @ n)
    delta_min, delta_max = float(near.min()), float(far.min())
    if not delta_min < delta_max:
        raise DegenerateGeometryError(
            f"sweep normal {n} does not separate the depth range (delta_min={delta_min}, delta_max={delta_max})"
        )
    if centers is not None:
        cams = pose.to_camera(np.asarray(centers, dtype=np.float64).reshape(-1, 3))
        margin = cams @ n + delta_min
        if np.any(margin <= 0):
            bad = int(np.argmin(margin))
            raise DegenerateGeometryError(
                f"camera {bad} lies behind the nearest sweep plane (n.C + delta_min = {margin[bad]:.6g}); "
                "increase d_min or change the sweep normal"
            )
    return delta_min, delta_max


def cross_ratio(p1, p2, p3, p4) -> float:
    """Cross-ratio ``|p1p3| |p2p4| / (|p1p4| |p2p3|)`` of four collinear points."""
    pts = [np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in (p1, p2, p3, p4)]

    def dist(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.linalg.norm(a - b))

    num = dist(pts[0], pts[2]) * dist(pts[1], pts[3])
    den = dist(pts[0], pts[3]) * dist(pts[1], pts[2])
    if den == 0.0:
        raise ZeroDivisionError("cross-ratio undefined: p1 coincides with p4 or p2 with p3")
    return num / den


def _sin_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sine of the angle enclosed by (batches of) 3-vectors."""
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return cross / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))


def ray_cross_ratio(v1, v2, v3, v4) -> np.ndarray:
    """Cross-ratio of a pencil of four rays through a common centre (sine form)."""
    v1, v2, v3, v4 = (np.asarray(v, dtype=np.float64) for v in (v1, v2, v3, v4))
    return (_sin_angle(v1, v3) * _sin_angle(v2, v4)) / (_sin_angle(v1, v4) * _sin_angle(v2, v3))


def sweep_partner(centers: Sequence[np.ndarray], ref_index: int) -> int:
    """Index of the camera farthest from the reference centre."""
    c = np.asarray(centers, dtype=np.float64)
    d = np.linalg.norm(c - c[ref_index], axis=1)
    d[ref_index] = -1.0
    return int(np.argmax(d))


def plane_distances(
    ref: tuple[Intrinsics, Pose],
    other: tuple[Intrinsics, Pose],
    bounds: tuple[float, float],
    normal: Sequence[float] | np.ndarray = FRONTO_PARALLEL,
    max_planes: int | None = None,
) -> PlaneSet:
    """Plane distances such that consecutive planes shift the extremal pixel by <= 1 px.

    The corner pixel with the longest epipolar segment between the two
    bounding planes is traced in ``other``; the segment is walked in unit
    steps from the far end and each sample is mapped back to a plane distance
    through the cross-ratio of the pencil of rays through the centre of
    ``other``.  If the walk yields more than ``max_planes`` samples, the
    segment is resampled uniformly with ``max_planes`` positions instead and
    ``max_step_px`` of the result reports the enlarged step.
    """
    n = unit(normal)
    delta_min, delta_max = float(bounds[0]), float(bounds[1])
    if not (0 < delta_min <= delta_max):
        raise InvalidInputError(f"invalid plane bounds [{delta_min}, {delta_max}]")
    if delta_min == delta_max:
        return PlaneSet(n, np.array([delta_min]), 0.0)
    if max_planes is not None and max_planes < 2:
        raise InvalidInputError("max_planes must be at least 2")

    K_ref, pose_ref = ref
    K_k, pose_k = other
    R, t = relative_transform(pose_ref, pose_k)
    if np.linalg.norm(t) < 1e-12:
        raise DegenerateGeometryError("zero baseline between reference and sweep partner")

    corners = K_ref.corners()
    rays = corners @ K_ref.inverse.T
    denom = rays @ n
    if np.any(denom >= -1e-12):
        raise DegenerateGeometryError("reference viewing rays do not intersect the sweep planes in front of the camera")
    P_min = rays * (-delta_min / denom)[:, None]
    P_max = rays * (-delta_max / denom)[:, None]
    Q_min = P_min @ R.T + t
    Q_max = P_max @ R.T + t
    if np.any(Q_min[:, 2] <= 0) or np.any(Q_max[:, 2] <= 0):
        raise DegenerateGeometryError("bounding-plane points fall behind the sweep partner camera")
    px_min = project(K_k, Q_min)
    px_max = project(K_k, Q_max)
    span = np.linalg.norm(px_min - px_max, axis=1)
    c = int(np.argmax(span))
    length = float(span[c])
    if length < 1e-9:
        raise DegenerateGeometryError("no parallax between reference and sweep partner")
    direction = (px_min[c] - px_max[c]) / length

    # Pencil of rays through the partner centre (partner camera frame).
    v_epi = t  # reference centre seen from the partner
    v_min = Q_min[c]
    v_max = Q_max[c]
    sin_min_max = _sin_angle(v_min, v_max)
    sin_e_max = _sin_angle(v_epi, v_max)
    if sin_min_max < 1e-15 or sin_e_max < 1e-12 or _sin_angle(v_epi, v_min) < 1e-12:
        raise DegenerateGeometryError("epipole coincides with the sampled epipolar segment")

    if max_planes is not None and math.floor(length) + 1 + (length % 1 > 1e-9) > max_planes:
        steps = np.linspace(0.0, length, max_planes)
        max_step = length / (max_planes - 1)
    else:
        steps = np.arange(0.0, math.floor(length) + 1.0)
        if length - steps[-1] > 1e-9:
            steps = np.append(steps, length)
        max_step = 1.0

    samples = px_max[c][None, :] + steps[:, None] * direction[None, :]
    v_i = np.concatenate([samples, np.ones((samples.shape[0], 1))], axis=1) @ K_k.inverse.T
    # Q = a / b with a = sin(e, p_i) sin(min, max), b = sin(e, max) sin(min, p_i).
    a = _sin_angle(v_epi[None], v_i) * sin_min_max
    b = sin_e_max * _sin_angle(v_min[None], v_i)
    deltas = a * delta_max * delta_min / (a * delta_max - b * (delta_max - delta_min))
    deltas[0] = delta_max
    deltas[-1] = delta_min
    deltas = np.clip(deltas, delta_min, delta_max)
    keep = np.concatenate([[True], np.diff(deltas) < 0])
    return PlaneSet(n, deltas[keep], max_step)


def depth_from_plane(pixel, plane: SweepPlane, intrinsics: Intrinsics) -> float:
    """z-depth of the intersection of the viewing ray through ``pixel`` with ``plane``."""
    ray = intrinsics.inverse @ np.array([pixel[0], pixel[1], 1.0])
    denom = float(plane.normal @ ray)
    if abs(denom) < 1e-12:
        raise DegenerateGeometryError("viewing ray is parallel to the plane")
    return -plane.distance / denom
