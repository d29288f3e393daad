from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replicant.camera import Camera, intrinsics, look_at
from replicant.scene import Gaussians, Scene, transform_gaussian
from replicant.splat_io import (
    SceneLoadError,
    load_scene,
    read_features,
    read_mask,
    save_scene,
    write_features,
    write_mask,
    write_splat_ply,
)
from replicant.transforms import RigidTransform, quat_normalize

from .conftest import default_camera, random_gaussians


def make_scene(rng, n=10):
    g = random_gaussians(rng, n)
    return Scene(g, [default_camera()], background=np.array([0.2, 0.3, 0.4]))


def test_round_trip_identity(tmp_path, rng):
    scene = make_scene(rng, 100)
    path = tmp_path / "scene.ply"
    save_scene(scene, path)
    loaded = load_scene(path)
    g0, g1 = scene.gaussians, loaded.gaussians
    # storage is float32; loaded values must equal float32-cast originals exactly
    assert np.array_equal(g1.positions, g0.positions.astype(np.float32).astype(np.float64))
    assert np.array_equal(g1.opacity_logits, g0.opacity_logits.astype(np.float32).astype(np.float64))
    assert np.array_equal(g1.log_scales, g0.log_scales.astype(np.float32).astype(np.float64))
    assert np.array_equal(g1.sh, g0.sh.astype(np.float32).astype(np.float64))
    assert np.array_equal(g1.features, g0.features.astype(np.float32).astype(np.float64))
    assert np.allclose(g1.rotations, g0.rotations, atol=1e-7)
    assert loaded.background == pytest.approx([0.2, 0.3, 0.4])
    assert len(loaded.cameras) == 1
    assert np.allclose(loaded.cameras[0].K, scene.cameras[0].K)
    assert np.allclose(loaded.cameras[0].cam_to_world, scene.cameras[0].cam_to_world)


def test_save_load_save_is_byte_identical(tmp_path, rng):
    scene = make_scene(rng, 37)
    p1 = tmp_path / "a.ply"
    p2 = tmp_path / "b.ply"
    save_scene(scene, p1)
    save_scene(load_scene(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_single_gaussian_golden_values(tmp_path):
    g = Gaussians.empty(1, feature_dim=0)
    g.positions[0] = [1.25, -0.5, 3.0]
    g.opacity_logits[0] = 0.75
    scene = Scene(g, [], background=np.zeros(3))
    path = tmp_path / "one.ply"
    save_scene(scene, path)
    loaded = load_scene(path)
    assert len(loaded.gaussians) == 1
    assert np.array_equal(loaded.gaussians.positions[0], [1.25, -0.5, 3.0])
    assert loaded.gaussians.opacity_logits[0] == 0.75


def test_missing_opacity_property_error(tmp_path):
    # hand-build a PLY with every base property except opacity
    from replicant.splat_io import PLY_BASE_PROPS

    props = [p for p in PLY_BASE_PROPS if p != "opacity"]
    header = ["ply", "format binary_little_endian 1.0", "element vertex 1"]
    header += [f"property float {p}" for p in props]
    header.append("end_header")
    path = tmp_path / "bad.ply"
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode())
        np.zeros(len(props), dtype="<f4").tofile(f)
    with pytest.raises(SceneLoadError, match="missing property: opacity"):
        load_scene(path)


def test_malformed_header_error(tmp_path):
    path = tmp_path / "junk.ply"
    path.write_bytes(b"not a ply at all")
    with pytest.raises(SceneLoadError, match="malformed"):
        load_scene(path)


def test_element_count_mismatch(tmp_path):
    g = Gaussians.empty(4, feature_dim=0)
    path = tmp_path / "trunc.ply"
    write_splat_ply(path, g)
    data = path.read_bytes()
    path.write_bytes(data[:-32])  # drop part of the payload
    with pytest.raises(SceneLoadError, match="element count mismatch"):
        load_scene(path)


def test_feature_sidecar_shape(tmp_path, rng):
    feats = rng.normal(size=(23, 16)).astype(np.float32)
    path = tmp_path / "f.features.bin"
    write_features(path, feats)
    assert path.stat().st_size == 8 + 23 * 16 * 4
    back = read_features(path)
    assert np.array_equal(back, feats.astype(np.float64))


def test_unwritable_path_raises(tmp_path, rng):
    scene = make_scene(rng, 3)
    with pytest.raises(OSError):
        save_scene(scene, "/proc/definitely/not/writable/x.ply")


def test_mask_round_trip(tmp_path, rng):
    labels = rng.integers(0, 700, size=(48, 64))
    path = tmp_path / "m.png"
    write_mask(path, labels)
    assert np.array_equal(read_mask(path), labels)


def test_frames_persist_when_nontrivial(tmp_path, rng):
    g = random_gaussians(rng, 5)
    g.frames = quat_normalize(rng.normal(size=(5, 4)))
    scene = Scene(g, [], background=np.zeros(3))
    path = tmp_path / "fr.ply"
    save_scene(scene, path)
    loaded = load_scene(path)
    assert np.allclose(loaded.gaussians.frames, g.frames, atol=1e-7)


# ---------------------------------------------------------------------------
# transform_gaussian
# ---------------------------------------------------------------------------


def test_transform_identity_is_exact(rng):
    g = random_gaussians(rng, 1)[0]
    out = transform_gaussian(g, RigidTransform.identity())
    assert np.array_equal(out.position, g.position)
    assert np.array_equal(out.log_scale, g.log_scale)
    assert out.opacity_logit == g.opacity_logit
    assert np.array_equal(out.sh, g.sh)
    assert np.allclose(out.rotation, g.rotation, atol=1e-15)


def test_transform_rotates_position():
    g = Gaussians.empty(1)[0]
    g.position = np.array([1.0, 0, 0])
    rt = RigidTransform.from_axis_angle([0, 0, 1], np.pi / 2)
    out = transform_gaussian(g, rt)
    assert np.allclose(out.position, [0, 1, 0], atol=1e-12)


def test_transform_conjugates_covariance(rng):
    # oracle: explicit matrix conjugation R Sigma R^T
    g = random_gaussians(rng, 1)[0]
    rt = RigidTransform(quat_normalize(rng.normal(size=4)), rng.normal(size=3))
    out = transform_gaussian(g, rt)
    from replicant.transforms import quat_to_matrix

    r = quat_to_matrix(rt.rotation)
    expected = r @ g.covariance() @ r.T
    assert np.abs(out.covariance() - expected).max() < 1e-10


def test_transform_composition(rng):
    g = random_gaussians(rng, 1)[0]
    t1 = RigidTransform(quat_normalize(rng.normal(size=4)), rng.normal(size=3))
    t2 = RigidTransform(quat_normalize(rng.normal(size=4)), rng.normal(size=3))
    seq = transform_gaussian(transform_gaussian(g, t1), t2)
    once = transform_gaussian(g, t2.compose(t1))
    assert np.allclose(seq.position, once.position, atol=1e-10)
    assert np.allclose(seq.covariance(), once.covariance(), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_property_load_save_identity_random_scenes(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    scene = make_scene(rng, int(rng.integers(1, 30)))
    path = tmp_path_factory.mktemp("ply") / "s.ply"
    save_scene(scene, path)
    reloaded = load_scene(path)
    assert np.array_equal(
        reloaded.gaussians.positions,
        scene.gaussians.positions.astype(np.float32).astype(np.float64),
    )
    # activations stay in range after the round trip
    assert np.all(reloaded.gaussians.opacities > 0)
    assert np.all(reloaded.gaussians.opacities < 1)
    assert np.all(reloaded.gaussians.scales > 0)
