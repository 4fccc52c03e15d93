"""Ray-cast renderer for textured planar scenes with exact depth/normal ground truth.

Every pixel ray is intersected analytically with the scene planes and the
texture is evaluated at the continuous hit position, so rendered views are
related by exact plane-induced homographies (up to 8-bit quantisation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CalibratedView, Intrinsics, Pose, unit

_LATTICE = 256


@dataclass(frozen=True, eq=False)
class TexturedPlane:
    """Planar patch ``normal . (X - point) = 0`` in world coordinates.

    ``half_extent`` bounds the patch to ``|u| <= a, |v| <= b`` in its own
    in-plane axes; ``None`` makes it infinite.  ``scale`` is the texture cell
    size in world units.
    """

    point: np.ndarray
    normal: np.ndarray
    texture: str = "value-noise"
    scale: float = 0.1
    seed: int = 0
    half_extent: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.texture not in ("value-noise", "checkerboard"):
            raise ValueError(f"unknown texture kind {self.texture!r}")
        object.__setattr__(self, "point", np.asarray(self.point, dtype=np.float64))
        object.__setattr__(self, "normal", unit(self.normal))

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        helper = np.array([1.0, 0.0, 0.0]) if abs(self.normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = unit(np.cross(helper, self.normal))
        v = np.cross(self.normal, u)
        return u, v


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    planes: list[TexturedPlane]
    intrinsics: Intrinsics
    poses: list[Pose]
    background: int = 0


@dataclass(eq=False)
class RenderedScene:
    views: list[CalibratedView]
    depths: list[np.ndarray]
    normals: list[np.ndarray]
    scene: SyntheticScene = field(repr=False)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def _value_noise(u: np.ndarray, v: np.ndarray, seed: int) -> np.ndarray:
    lattice = np.random.default_rng(seed).random((_LATTICE, _LATTICE))
    iu, iv = np.floor(u), np.floor(v)
    fu, fv = _smoothstep(u - iu), _smoothstep(v - iv)
    i0 = iu.astype(np.int64) % _LATTICE
    j0 = iv.astype(np.int64) % _LATTICE
    i1, j1 = (i0 + 1) % _LATTICE, (j0 + 1) % _LATTICE
    top = lattice[j0, i0] * (1 - fu) + lattice[j0, i1] * fu
    bottom = lattice[j1, i0] * (1 - fu) + lattice[j1, i1] * fu
    return top * (1 - fv) + bottom * fv


def texture_value(plane: TexturedPlane, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Intensity in [0, 255] of the plane texture at in-plane coordinates."""
    su, sv = u / plane.scale, v / plane.scale
    if plane.texture == "checkerboard":
        cells = (np.floor(su).astype(np.int64) + np.floor(sv).astype(np.int64)) % 2
        return np.where(cells == 0, 60.0, 190.0)
    coarse = _value_noise(su, sv, plane.seed)
    fine = _value_noise(2.0 * su + 17.0, 2.0 * sv + 29.0, plane.seed + 1)
    return 25.0 + 205.0 * (0.65 * coarse + 0.35 * fine)


def render_view(scene: SyntheticScene, pose: Pose) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render one view; returns (uint8 image, depth with 0 = no hit, camera-frame normals)."""
    K = scene.intrinsics
    rays_cam = K.pixel_rays()
    rays = rays_cam @ pose.rotation  # camera -> world directions
    best_t = np.full(K.shape, np.inf)
    image = np.full(K.shape, float(scene.background))
    normals = np.zeros(K.shape + (3,))
    for plane in scene.planes:
        denom = rays @ plane.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = float(plane.normal @ (plane.point - pose.center)) / denom
        hit = np.isfinite(t) & (t > 0)
        X = pose.center + rays * np.where(hit, t, 0.0)[..., None]
        ax_u, ax_v = plane.axes()
        u = (X - plane.point) @ ax_u
        v = (X - plane.point) @ ax_v
        if plane.half_extent is not None:
            hit &= (np.abs(u) <= plane.half_extent[0]) & (np.abs(v) <= plane.half_extent[1])
        closer = hit & (t < best_t)
        if not closer.any():
            continue
        best_t = np.where(closer, t, best_t)
        image = np.where(closer, texture_value(plane, u, v), image)
        n_cam = pose.rotation @ plane.normal
        if n_cam[2] > 0:
            n_cam = -n_cam
        normals[closer] = n_cam
    depth = np.where(np.isfinite(best_t), best_t, 0.0)  # rays have unit z, so t is the z-depth
    return np.clip(np.rint(image), 0, 255).astype(np.uint8), depth, normals


def render_scene(scene: SyntheticScene) -> RenderedScene:
    views, depths, normals = [], [], []
    for pose in scene.poses:
        img, depth, nrm = render_view(scene, pose)
        views.append(CalibratedView(img, scene.intrinsics, pose))
        depths.append(depth)
        normals.append(nrm)
    return RenderedScene(views, depths, normals, scene)


def lateral_poses(n_views: int, baseline: float) -> list[Pose]:
    """Cameras translated along +x with identity orientation, reference in the middle."""
    mid = n_views // 2
    return [Pose(np.eye(3), [(k - mid) * baseline, 0.0, 0.0]) for k in range(n_views)]


def look_at(center, target, up=(0.0, -1.0, 0.0)) -> Pose:
    """Pose at ``center`` whose optical axis points at ``target`` (image y along ``-up``)."""
    z = unit(np.asarray(target, dtype=np.float64) - np.asarray(center, dtype=np.float64))
    x = unit(np.cross(-np.asarray(up, dtype=np.float64), z))
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z]), center)


def orbit_poses(n_views: int, radius: float, step_deg: float, target=(0.0, 0.0, 0.0)) -> list[Pose]:
    """Cameras on a horizontal arc around ``target``, all looking at it."""
    mid = n_views // 2
    target = np.asarray(target, dtype=np.float64)
    poses = []
    for k in range(n_views):
        a = np.deg2rad((k - mid) * step_deg)
        c = target + radius * np.array([np.sin(a), 0.0, -np.cos(a)])
        poses.append(look_at(c, target))
    return poses


def default_intrinsics(width: int = 320, height: int = 240, focal: float = 300.0) -> Intrinsics:
    return Intrinsics(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


def fronto_parallel_scene(
    width: int = 320,
    height: int = 240,
    depth: float = 10.0,
    n_views: int = 5,
    baseline: float = 0.5,
    texture: str = "value-noise",
    seed: int = 7,
) -> SyntheticScene:
    plane = TexturedPlane([0.0, 0.0, depth], [0.0, 0.0, -1.0], texture=texture, scale=0.12, seed=seed)
    return SyntheticScene([plane], default_intrinsics(width, height), lateral_poses(n_views, baseline))


def slanted_scene(
    width: int = 320,
    height: int = 240,
    depth: float = 10.0,
    angle_deg: float = 45.0,
    n_views: int = 5,
    baseline: float = 0.5,
    seed: int = 11,
) -> SyntheticScene:
    """Plane through ``(0, 0, depth)`` tilted by ``angle_deg`` about the x axis."""
    a = np.deg2rad(angle_deg)
    normal = [0.0, -np.sin(a), -np.cos(a)]
    plane = TexturedPlane([0.0, 0.0, depth], normal, scale=0.12, seed=seed)
    return SyntheticScene([plane], default_intrinsics(width, height), lateral_poses(n_views, baseline))


def two_plane_scene(
    width: int = 320,
    height: int = 240,
    n_views: int = 5,
    step_deg: float = 3.0,
    seed: int = 5,
) -> SyntheticScene:
    """Textured backdrop with a slanted box face in front, seen from an arc of cameras."""
    back = TexturedPlane([0.0, 0.0, 4.0], [0.0, 0.0, -1.0], scale=0.12, seed=seed)
    front = TexturedPlane(
        [0.4, 0.2, 1.0], unit([0.3, 0.0, -1.0]), scale=0.08, seed=seed + 10, half_extent=(1.2, 0.9)
    )
    poses = orbit_poses(n_views, radius=10.0, step_deg=step_deg, target=(0.0, 0.0, 0.0))
    return SyntheticScene([back, front], default_intrinsics(width, height), poses)
