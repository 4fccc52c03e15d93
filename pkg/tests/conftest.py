from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from fassmvs.geometry import Intrinsics, Pose


def random_rotation(rng: np.random.Generator, max_deg: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(-max_deg, max_deg))
    return Rotation.from_rotvec(axis * angle).as_matrix()


def random_camera_pair(rng: np.random.Generator, width: int = 160, height: int = 120):
    """Reference at the origin looking down +z and a neighbour with a modest baseline."""
    f = rng.uniform(80, 200)
    K = Intrinsics(f, f * rng.uniform(0.9, 1.1), width / 2 + rng.uniform(-5, 5), height / 2 + rng.uniform(-5, 5), width, height)
    ref = Pose(random_rotation(rng, 10), rng.uniform(-1, 1, size=3))
    baseline = rng.normal(size=3)
    baseline[2] *= 0.3
    baseline *= rng.uniform(0.2, 1.0) / np.linalg.norm(baseline)
    other = Pose(random_rotation(rng, 5) @ ref.rotation, ref.center + ref.rotation.T @ baseline)
    return K, ref, other


def world_project(K: Intrinsics, pose: Pose, X: np.ndarray) -> np.ndarray:
    """Projection through the full 3x4 matrix, independent of relative transforms."""
    P = pose.projection(K)
    hom = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1) @ P.T
    return hom[:, :2] / hom[:, 2:3]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
