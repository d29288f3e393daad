from __future__ import annotations

import numpy as np
import pytest

from replicant.camera import Camera, intrinsics, look_at
from replicant.scene import Gaussians, Scene


def random_gaussians(
    rng: np.random.Generator,
    n: int,
    feature_dim: int = 4,
    spread: float = 0.5,
    scale_range: tuple[float, float] = (0.08, 0.3),
) -> Gaussians:
    g = Gaussians.empty(n, feature_dim=feature_dim)
    g.positions = rng.normal(size=(n, 3)) * spread
    g.rotations = rng.normal(size=(n, 4))
    g.log_scales = np.log(rng.uniform(*scale_range, size=(n, 3)))
    g.opacity_logits = rng.normal(size=n)
    g.sh = rng.normal(size=(n, 16, 3)) * 0.2
    g.sh[:, 0, :] = rng.uniform(0.5, 2.0, size=(n, 3))
    g.features = rng.normal(size=(n, feature_dim))
    return Gaussians(
        g.positions, g.rotations, g.log_scales, g.opacity_logits, g.sh, g.features
    )


def default_camera(width: int = 64, height: int = 64, view_id: int = 0) -> Camera:
    return Camera(
        K=intrinsics(60, 60, (width - 1) / 2, (height - 1) / 2),
        cam_to_world=look_at([0, -4, 1], [0, 0, 0]),
        width=width,
        height=height,
        view_id=view_id,
    )


def random_scene(seed: int, n: int = 20, feature_dim: int = 4) -> tuple[Scene, Camera]:
    rng = np.random.default_rng(seed)
    g = random_gaussians(rng, n, feature_dim=feature_dim)
    cam = default_camera()
    return Scene(g, [cam], background=np.array([0.1, 0.2, 0.3])), cam


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
