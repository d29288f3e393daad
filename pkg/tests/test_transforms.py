from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replicant.transforms import (
    RigidTransform,
    matrix_to_quat,
    quat_from_axis_angle,
    quat_multiply,
    quat_multiply_grads,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    rotation_geodesic_deg,
    rotation_matrix_grad_to_quat,
)


def random_quat(rng):
    return quat_normalize(rng.normal(size=4))


def test_quat_to_matrix_identity():
    assert np.allclose(quat_to_matrix([1, 0, 0, 0]), np.eye(3))


def test_quat_matrix_round_trip(rng):
    for _ in range(20):
        q = random_quat(rng)
        m = quat_to_matrix(q)
        q2 = matrix_to_quat(m)
        # q and -q encode the same rotation
        assert np.allclose(quat_to_matrix(q2), m, atol=1e-10)


def test_quat_multiply_matches_matrix_product(rng):
    a, b = random_quat(rng), random_quat(rng)
    m = quat_to_matrix(quat_multiply(a, b))
    assert np.allclose(m, quat_to_matrix(a) @ quat_to_matrix(b), atol=1e-12)


def test_rotate_90deg_about_z():
    rt = RigidTransform.from_axis_angle([0, 0, 1], np.pi / 2)
    p = rt.apply(np.array([1.0, 0, 0]))
    assert np.allclose(p, [0, 1, 0], atol=1e-12)


def test_compose_and_inverse(rng):
    a = RigidTransform(random_quat(rng), rng.normal(size=3))
    b = RigidTransform(random_quat(rng), rng.normal(size=3))
    p = rng.normal(size=(7, 3))
    assert np.allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-10)
    assert np.allclose(a.compose(a.inverse()).apply(p), p, atol=1e-10)
    assert np.allclose(a.inverse().compose(a).apply(p), p, atol=1e-10)


def test_geodesic_angle():
    a = RigidTransform.identity()
    b = RigidTransform.from_axis_angle([0, 1, 0], np.radians(17.0))
    assert rotation_geodesic_deg(a, b) == pytest.approx(17.0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_rigid_transform_matrix_round_trip(seed):
    rng = np.random.default_rng(seed)
    rt = RigidTransform(random_quat(rng), rng.normal(size=3))
    rt2 = RigidTransform.from_matrix(rt.matrix())
    p = rng.normal(size=(5, 3))
    assert np.allclose(rt.apply(p), rt2.apply(p), atol=1e-10)


def test_rotation_matrix_grad_matches_fd(rng):
    q = rng.normal(size=4)  # deliberately non-unit
    d_mat = rng.normal(size=(3, 3))
    g = rotation_matrix_grad_to_quat(q, d_mat)
    h = 1e-7
    for i in range(4):
        qp, qm = q.copy(), q.copy()
        qp[i] += h
        qm[i] -= h
        fd = np.sum((quat_to_matrix(qp) - quat_to_matrix(qm)) * d_mat) / (2 * h)
        assert fd == pytest.approx(g[i], rel=1e-5, abs=1e-8)


def test_quat_multiply_grads_match_fd(rng):
    a, b = rng.normal(size=4), rng.normal(size=4)
    d_out = rng.normal(size=4)
    da, db = quat_multiply_grads(a, b, d_out)
    h = 1e-7
    for i in range(4):
        ap, am = a.copy(), a.copy()
        ap[i] += h
        am[i] -= h
        fd = np.sum((quat_multiply(ap, b) - quat_multiply(am, b)) * d_out) / (2 * h)
        assert fd == pytest.approx(da[i], rel=1e-6, abs=1e-9)
        bp, bm = b.copy(), b.copy()
        bp[i] += h
        bm[i] -= h
        fd = np.sum((quat_multiply(a, bp) - quat_multiply(a, bm)) * d_out) / (2 * h)
        assert fd == pytest.approx(db[i], rel=1e-6, abs=1e-9)


def test_quat_rotate_matches_matrix(rng):
    q = random_quat(rng)
    v = rng.normal(size=(4, 3))
    assert np.allclose(quat_rotate(q, v), v @ quat_to_matrix(q).T, atol=1e-12)


def test_axis_angle_quat():
    q = quat_from_axis_angle([0, 0, 1], np.pi)
    assert np.allclose(quat_rotate(q, [1, 0, 0]), [-1, 0, 0], atol=1e-12)
