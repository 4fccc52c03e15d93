from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fassmvs.geometry import Intrinsics, unit
from fassmvs.surface_maps import confidence, normals_from_depth, smooth_normals

K = Intrinsics(60.0, 60.0, 19.5, 14.5, 40, 30)


def _angle_deg(a, b) -> np.ndarray:
    return np.degrees(np.arccos(np.clip(np.sum(a * b, axis=-1), -1, 1)))


def test_fronto_depth_gives_camera_facing_normal():
    n = normals_from_depth(np.full((30, 40), 10.0), K)
    np.testing.assert_allclose(n[1:-1, 1:-1], np.broadcast_to([0, 0, -1.0], (28, 38, 3)), atol=1e-12)
    assert not n[0].any() and not n[:, -1].any()


@pytest.mark.parametrize("tilt", [30.0, -30.0, 50.0])
def test_tilted_plane_normals_match_analytic(tilt):
    a = math.radians(tilt)
    n_true = unit([0.0, -math.sin(a), -math.cos(a)])
    offset = 8.0 * math.cos(a)
    depth = -offset / (K.pixel_rays() @ n_true)
    n = normals_from_depth(depth, K)
    assert _angle_deg(n[1:-1, 1:-1], n_true).max() < 0.5


def test_isolated_pixel_is_invalid():
    depth = np.zeros((30, 40))
    depth[2, 2] = 4.0
    assert not normals_from_depth(depth, K).any()
    with pytest.raises(ValueError):
        normals_from_depth(np.ones((5, 5)), K)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_valid_normals_are_unit_and_camera_facing(seed):
    rng = np.random.default_rng(seed)
    depth = rng.uniform(1, 20, size=(30, 40))
    depth[rng.random((30, 40)) < 0.2] = 0
    n = normals_from_depth(depth, K)
    valid = np.any(n != 0, axis=-1)
    np.testing.assert_allclose(np.linalg.norm(n[valid], axis=-1), 1.0, atol=1e-9)
    assert (n[valid][:, 2] <= 0).all()


def test_smoothing_keeps_uniform_field(rng):
    n0 = unit([0.2, -0.3, -0.9])
    field = np.broadcast_to(n0, (20, 25, 3)).copy()
    img = rng.integers(0, 256, size=(20, 25))
    np.testing.assert_allclose(smooth_normals(field, img, radius=2), field, atol=1e-9)


def test_smoothing_all_invalid_stays_invalid(rng):
    assert not smooth_normals(np.zeros((8, 9, 3)), rng.integers(0, 256, size=(8, 9))).any()


def test_smoothing_preserves_regions_across_edge(rng):
    h, w, r = 30, 40, 2
    a, b = unit([0.3, 0.0, -1.0]), unit([-0.4, 0.2, -1.0])
    field = np.where((np.arange(w) < 20)[None, :, None], a, b) + rng.normal(scale=0.05, size=(h, w, 3))
    field /= np.linalg.norm(field, axis=-1, keepdims=True)
    img = np.where(np.arange(w) < 20, 40.0, 220.0)[None, :].repeat(h, axis=0)
    out = smooth_normals(field, img, radius=r)
    left = out[r:-r, r : 20 - r - 1]
    right = out[r:-r, 20 + r + 1 : -r]
    assert _angle_deg(unit(left.reshape(-1, 3).mean(axis=0)), a) < 2.0
    assert _angle_deg(unit(right.reshape(-1, 3).mean(axis=0)), b) < 2.0
    # the edge itself is not blurred: pixels beside it stay close to their own side
    assert _angle_deg(out[r:-r, 19], a).mean() < 5.0


def test_smoothing_reduces_noise(rng):
    n0 = unit([0.1, 0.1, -1.0])
    noisy = n0 + rng.normal(scale=0.1, size=(30, 30, 3))
    noisy /= np.linalg.norm(noisy, axis=-1, keepdims=True)
    out = smooth_normals(noisy, np.full((30, 30), 100.0), radius=2)
    assert _angle_deg(out, n0).mean() < 0.6 * _angle_deg(noisy, n0).mean()


def _tilted(deg: float) -> np.ndarray:
    a = math.radians(deg)
    return np.array([[[math.sin(a), 0.0, -math.cos(a)]]])


def test_confidence_examples():
    v = np.array([0.0, 0.0, -1.0])
    assert confidence(_tilted(0.0), v)[0, 0] == 1.0
    assert confidence(_tilted(60.0), v)[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert confidence(_tilted(30.0), v)[0, 0] == pytest.approx((math.cos(math.radians(30)) - 0.5) / 0.5, abs=1e-6)
    assert confidence(_tilted(30.0), v)[0, 0] == pytest.approx(0.7321, abs=1e-4)
    assert confidence(_tilted(61.0), v)[0, 0] == 0.0
    assert confidence(np.zeros((1, 1, 3)), v)[0, 0] == 0.0


def test_confidence_with_slanted_sweep():
    sweep = unit([0.0, np.sin(np.radians(70)), -np.cos(np.radians(70))])
    assert confidence(np.broadcast_to(sweep, (1, 1, 3)), sweep)[0, 0] == 0.0  # sweep tilted past rho
    sweep = unit([0.0, np.sin(np.radians(20)), -np.cos(np.radians(20))])
    c = confidence(np.broadcast_to(sweep, (1, 1, 3)), sweep)[0, 0]
    assert c == pytest.approx((np.cos(np.radians(20)) - 0.5) / 0.5)


def test_confidence_monotone_and_bounded():
    angles = np.linspace(0, 90, 181)
    vals = np.array([confidence(_tilted(a))[0, 0] for a in angles])
    assert np.all(np.diff(vals) <= 1e-15)
    assert vals.min() >= 0 and vals.max() <= 1
    assert (vals[angles > 60] == 0).all()
