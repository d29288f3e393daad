from __future__ import annotations

import numpy as np
import pytest

from replicant import sh as shlib
from replicant.camera import Camera, intrinsics, look_at
from replicant.render import (
    has_compiled,
    project_gaussian,
    render,
    use_backend,
)
from replicant.render.projection import COV2D_FLOOR, project_gaussians
from replicant.scene import Gaussians, Scene, logit

from .conftest import default_camera, random_gaussians


def axis_camera(f=100.0, size=65):
    # camera at origin looking along -z; principal point on a pixel center
    c = (size - 1) / 2
    return Camera(
        K=intrinsics(f, f, c, c), cam_to_world=np.eye(4), width=size, height=size
    )


def single_gaussian(position, scale=0.2, opacity=0.9, rgb=(0.8, 0.6, 0.4)):
    g = Gaussians.empty(1, feature_dim=3)
    g.positions[0] = position
    g.log_scales[0] = np.log(scale)
    g.opacity_logits[0] = logit(opacity)
    g.sh[0, 0] = shlib.dc_from_rgb(rgb)
    return g


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def test_on_axis_isotropic_projection():
    f, s, z = 100.0, 0.2, 4.0
    cam = axis_camera(f)
    g = single_gaussian([0, 0, -z], scale=s)[0]
    res = project_gaussian(g, cam)
    assert res is not None
    mean2d, cov2d, depth = res
    assert np.allclose(mean2d, [32.0, 32.0], atol=1e-9)
    assert depth == pytest.approx(z)
    expected = (f * s / z) ** 2 * np.eye(2)
    assert np.abs(cov2d - expected).max() < 1e-9


def test_behind_camera_is_culled():
    cam = axis_camera()
    g = single_gaussian([0, 0, 1.0])[0]  # z = +1 is behind a -z-looking camera
    assert project_gaussian(g, cam) is None


def test_offscreen_is_culled():
    cam = axis_camera()
    g = single_gaussian([100.0, 0, -2.0], scale=0.05)[0]
    assert project_gaussian(g, cam) is None


def test_cov2d_matches_fd_jacobian_oracle(rng):
    # oracle: J by central differences of the public projection map, then
    # J Sigma_cam J^T; scales chosen to keep the 0.3 px low-pass floor inactive
    cam = Camera(
        K=intrinsics(70, 85, 31.0, 33.5),
        cam_to_world=look_at([0.5, -4, 1.5], [0, 0, 0]),
        width=64,
        height=64,
    )
    for _ in range(10):
        g = random_gaussians(rng, 1, spread=0.8, scale_range=(0.15, 0.4))[0]
        res = project_gaussian(g, cam)
        if res is None:
            continue
        _, cov2d, depth = res
        h = 1e-4 * depth
        jac = np.zeros((2, 3))
        for j in range(3):
            e = cam.rotation[:, j]  # perturb along camera axes in world space
            up, _ = cam.project(g.position + h * e)
            dn, _ = cam.project(g.position - h * e)
            jac[:, j] = (up - dn) / (2 * h)
        sigma_cam = cam.rotation.T @ g.covariance() @ cam.rotation
        oracle = jac @ sigma_cam @ jac.T
        assert np.all(np.diag(oracle) > COV2D_FLOOR)  # floor inactive by design
        rel = np.abs(cov2d - oracle).max() / np.abs(oracle).max()
        assert rel < 1e-3


# ---------------------------------------------------------------------------
# compositing
# ---------------------------------------------------------------------------


def test_empty_region_is_background():
    cam = axis_camera()
    g = single_gaussian([0, 0, -3.0], scale=0.01)
    scene = Scene(g, [cam], background=np.array([0.25, 0.5, 0.75]))
    out = render(scene, cam, with_features=True, dtype=np.float64)
    corner = out.color[0, 0]
    assert np.allclose(corner, [0.25, 0.5, 0.75], atol=1e-12)
    assert out.alpha[0, 0] == 0
    assert out.depth[0, 0] == 0
    assert np.all(out.feature[0, 0] == 0)


def test_single_gaussian_center_compositing():
    cam = axis_camera()
    bg = np.array([0.1, 0.2, 0.3])
    c = np.array([0.8, 0.6, 0.4])
    scene = Scene(single_gaussian([0, 0, -3.0], opacity=0.9, rgb=c), [cam], background=bg)
    out = render(scene, cam, dtype=np.float64)
    pix = out.color[32, 32]
    assert np.allclose(pix, 0.9 * c + 0.1 * bg, atol=1e-6)
    assert out.alpha[32, 32] == pytest.approx(0.9, abs=1e-6)
    assert out.depth[32, 32] == pytest.approx(3.0, abs=1e-6)


def test_two_gaussian_hand_composited_oracle():
    cam = axis_camera()
    bg = np.array([0.05, 0.1, 0.15])
    c1, c2 = np.array([0.9, 0.1, 0.2]), np.array([0.2, 0.7, 0.3])
    a1, a2 = 0.6, 0.8
    g1 = single_gaussian([0, 0, -2.0], opacity=a1, rgb=c1)
    g2 = single_gaussian([0, 0, -5.0], opacity=a2, rgb=c2)
    scene = Scene(Gaussians.concatenate([g2, g1]), [cam], background=bg)
    out = render(scene, cam, dtype=np.float64)
    expected = c1 * a1 + c2 * a2 * (1 - a1) + bg * (1 - a1) * (1 - a2)
    assert np.allclose(out.color[32, 32], expected, atol=1e-6)


def test_order_invariance(rng):
    scene_a = Scene(random_gaussians(rng, 30), [default_camera()], background=np.zeros(3))
    perm = rng.permutation(30)
    scene_b = Scene(scene_a.gaussians.subset(perm), scene_a.cameras, scene_a.background)
    cam = scene_a.cameras[0]
    out_a = render(scene_a, cam, with_features=True)
    out_b = render(scene_b, cam, with_features=True)
    assert np.array_equal(out_a.color, out_b.color)
    assert np.array_equal(out_a.alpha, out_b.alpha)
    assert np.array_equal(out_a.feature, out_b.feature)


def test_weights_sum_below_one_and_color_bounded(rng):
    g = random_gaussians(rng, 40)
    g.sh[:] = 0
    g.sh[:, 0, :] = shlib.dc_from_rgb(rng.uniform(0, 1, size=(40, 3)))
    scene = Scene(g, [default_camera()], background=np.zeros(3))
    out = render(scene, scene.cameras[0], dtype=np.float64)
    assert out.alpha.max() <= 1.0 + 1e-9
    assert np.all(out.color <= out.alpha[:, :, None] + 1e-9)


def test_feature_weights_identical_to_color(rng):
    g = random_gaussians(rng, 25, feature_dim=3)
    rgb = rng.uniform(0, 1, size=(25, 3))
    g.sh[:] = 0
    g.sh[:, 0, :] = shlib.dc_from_rgb(rgb)
    g.features = rgb.copy()
    scene = Scene(g, [default_camera()], background=np.zeros(3))
    out = render(scene, scene.cameras[0], with_features=True, dtype=np.float64)
    assert np.abs(out.feature - out.color).max() < 1e-12


def test_depth_is_weighted_mean_between_two_layers():
    cam = axis_camera()
    g1 = single_gaussian([0, 0, -2.0], opacity=0.5)
    g2 = single_gaussian([0, 0, -6.0], opacity=0.9)
    scene = Scene(Gaussians.concatenate([g1, g2]), [cam], background=np.zeros(3))
    out = render(scene, cam, dtype=np.float64)
    w1 = 0.5
    w2 = 0.9 * 0.5
    expected = (2.0 * w1 + 6.0 * w2) / (w1 + w2)
    assert out.depth[32, 32] == pytest.approx(expected, abs=1e-6)


@pytest.mark.skipif(not has_compiled(), reason="compiled backend not built")
def test_backends_agree(rng):
    scene = Scene(random_gaussians(rng, 50), [default_camera()], background=np.array([0.2, 0.1, 0.4]))
    cam = scene.cameras[0]
    with use_backend("compiled"):
        a = render(scene, cam, with_features=True, dtype=np.float64)
    with use_backend("numpy"):
        b = render(scene, cam, with_features=True, dtype=np.float64)
    assert np.abs(a.color - b.color).max() < 1e-12
    assert np.abs(a.alpha - b.alpha).max() < 1e-12
    assert np.abs(a.depth - b.depth).max() < 1e-12
    assert np.abs(a.feature - b.feature).max() < 1e-12


def test_projection_vectorized_matches_single(rng):
    g = random_gaussians(rng, 15)
    cam = default_camera()
    proj = project_gaussians(g.positions, g.rotations, g.log_scales, cam)
    for row, i in enumerate(proj.keep):
        res = project_gaussian(g[int(i)], cam)
        assert res is not None
        mean2d, cov2d, depth = res
        assert np.allclose(mean2d, proj.mean2d[row], atol=1e-12)
        assert depth == pytest.approx(proj.depth[row])
