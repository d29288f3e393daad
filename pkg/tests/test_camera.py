from __future__ import annotations

import numpy as np
import pytest

from replicant.camera import Camera, intrinsics, look_at


def test_identity_extrinsics_backproject_principal_point():
    cam = Camera(K=intrinsics(100, 100, 32, 32), cam_to_world=np.eye(4), width=64, height=64)
    p = cam.backproject(np.array([32.0, 32.0]), np.array(2.5))
    assert np.allclose(p, [0, 0, -2.5], atol=1e-12)


def test_project_backproject_round_trip(rng):
    cam = Camera(
        K=intrinsics(80, 90, 31.0, 33.0),
        cam_to_world=look_at([1, -3, 2], [0, 0.2, 0]),
        width=64,
        height=64,
    )
    uv = rng.uniform(0, 64, size=(50, 2))
    depth = rng.uniform(0.5, 10, size=50)
    p = cam.backproject(uv, depth)
    uv2, depth2 = cam.project(p)
    assert np.allclose(uv, uv2, atol=1e-9)
    assert np.allclose(depth, depth2, atol=1e-9)


def test_look_at_rotation_is_proper(rng):
    for _ in range(10):
        eye = rng.normal(size=3) * 3
        target = rng.normal(size=3)
        if np.linalg.norm(eye - target) < 0.1:
            continue
        m = look_at(eye, target)
        r = m[:3, :3]
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


def test_look_at_target_projects_to_center():
    cam = Camera(
        K=intrinsics(60, 60, 31.5, 31.5),
        cam_to_world=look_at([2, -5, 3], [0.5, 0.5, 0.5]),
        width=64,
        height=64,
    )
    uv, depth = cam.project(np.array([0.5, 0.5, 0.5]))
    assert np.allclose(uv, [31.5, 31.5], atol=1e-9)
    assert depth > 0


def test_world_up_maps_to_image_up():
    cam = Camera(
        K=intrinsics(60, 60, 31.5, 31.5),
        cam_to_world=look_at([0, -5, 0], [0, 0, 0], up=(0, 0, 1)),
        width=64,
        height=64,
    )
    uv_hi, _ = cam.project(np.array([0, 0, 0.5]))
    uv_lo, _ = cam.project(np.array([0, 0, -0.5]))
    assert uv_hi[1] < uv_lo[1]


def test_invalid_intrinsics_rejected():
    with pytest.raises(ValueError):
        Camera(K=intrinsics(-5, 60, 32, 32), cam_to_world=np.eye(4), width=64, height=64)


def test_reflected_extrinsics_rejected():
    m = np.eye(4)
    m[0, 0] = -1
    with pytest.raises(ValueError):
        Camera(K=intrinsics(60, 60, 32, 32), cam_to_world=m, width=64, height=64)
