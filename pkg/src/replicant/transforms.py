"""Quaternion algebra and rigid transforms.

Quaternions are stored (w, x, y, z), matching the splat-file ``rot_0..3``
layout. All helpers accept either a single quaternion ``(4,)`` or a batch
``(N, 4)`` and broadcast accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize zero quaternion")
    return q / norm


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b, broadcasting over leading dimensions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a quaternion; normalizes internally.

    Returns (3, 3) for a single quaternion, (N, 3, 3) for a batch.
    """
    n = quat_normalize(q)
    w, x, y, z = n[..., 0], n[..., 1], n[..., 2], n[..., 3]
    m = np.empty(n.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Quaternion (w, x, y, z) of a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z])
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (..., 3) by quaternion(s) q."""
    m = quat_to_matrix(q)
    return np.einsum("...ij,...j->...i", m, np.asarray(v, dtype=np.float64))


def rotation_matrix_grad_to_quat(q: np.ndarray, d_mat: np.ndarray) -> np.ndarray:
    """Chain dL/dR into dL/dq for R = quat_to_matrix(q).

    Includes the internal normalization, so q need not be unit. Accepts
    batches: q (N, 4), d_mat (N, 3, 3) -> (N, 4).
    """
    q = np.asarray(q, dtype=np.float64)
    d_mat = np.asarray(d_mat, dtype=np.float64)
    single = q.ndim == 1
    if single:
        q = q[None]
        d_mat = d_mat[None]
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    n = q / norm
    w, x, y, z = n[..., 0], n[..., 1], n[..., 2], n[..., 3]
    zero = np.zeros_like(w)
    # dR/d(unit component), rows stacked on a new leading axis of size 4
    dR = np.empty((4,) + d_mat.shape, dtype=np.float64)
    dR[0] = 2 * np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    dR[1] = 2 * np.stack(
        [
            np.stack([zero, y, z], axis=-1),
            np.stack([y, -2 * x, -w], axis=-1),
            np.stack([z, w, -2 * x], axis=-1),
        ],
        axis=-2,
    )
    dR[2] = 2 * np.stack(
        [
            np.stack([-2 * y, x, w], axis=-1),
            np.stack([x, zero, z], axis=-1),
            np.stack([-w, z, -2 * y], axis=-1),
        ],
        axis=-2,
    )
    dR[3] = 2 * np.stack(
        [
            np.stack([-2 * z, -w, x], axis=-1),
            np.stack([w, -2 * z, y], axis=-1),
            np.stack([x, y, zero], axis=-1),
        ],
        axis=-2,
    )
    d_unit = np.einsum("know,now->nk", dR, d_mat)
    # through normalization: dq = (I - n n^T) d_unit / |q|
    d_q = (d_unit - n * np.sum(d_unit * n, axis=-1, keepdims=True)) / norm
    return d_q[0] if single else d_q


def quat_multiply_grads(
    a: np.ndarray, b: np.ndarray, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backward of out = a ⊗ b: returns (dL/da, dL/db). Batched over leading dims."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d_out = np.asarray(d_out, dtype=np.float64)
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    gw, gx, gy, gz = d_out[..., 0], d_out[..., 1], d_out[..., 2], d_out[..., 3]
    d_a = np.stack(
        [
            gw * w2 + gx * x2 + gy * y2 + gz * z2,
            -gw * x2 + gx * w2 - gy * z2 + gz * y2,
            -gw * y2 + gx * z2 + gy * w2 - gz * x2,
            -gw * z2 - gx * y2 + gy * x2 + gz * w2,
        ],
        axis=-1,
    )
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    d_b = np.stack(
        [
            gw * w1 + gx * x1 + gy * y1 + gz * z1,
            -gw * x1 + gx * w1 + gy * z1 - gz * y1,
            -gw * y1 - gx * z1 + gy * w1 + gz * x1,
            -gw * z1 + gx * y1 - gy * x1 + gz * w1,
        ],
        axis=-1,
    )
    return d_a, d_b


@dataclass
class RigidTransform:
    """Rotation (unit quaternion, w-first) followed by translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = quat_normalize(np.asarray(self.rotation, dtype=np.float64))
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(rotation=matrix_to_quat(m[:3, :3]), translation=m[:3, 3])

    @classmethod
    def from_axis_angle(
        cls, axis: np.ndarray, angle: float, translation: np.ndarray | None = None
    ) -> "RigidTransform":
        t = np.zeros(3) if translation is None else translation
        return cls(rotation=quat_from_axis_angle(axis, angle), translation=t)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (3,) or (N, 3)."""
        r = quat_to_matrix(self.rotation)
        return np.asarray(points, dtype=np.float64) @ r.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply ``other`` first, then ``self``."""
        r = quat_multiply(self.rotation, other.rotation)
        t = self.apply(other.translation)
        return RigidTransform(rotation=r, translation=t)

    def inverse(self) -> "RigidTransform":
        r_inv = quat_conjugate(self.rotation)
        t_inv = -quat_rotate(r_inv, self.translation)
        return RigidTransform(rotation=r_inv, translation=t_inv)

    def rotation_angle_deg(self) -> float:
        """Geodesic rotation angle of this transform, in degrees."""
        w = np.clip(abs(self.rotation[0]), -1.0, 1.0)
        return float(np.degrees(2 * np.arccos(w)))


def rotation_geodesic_deg(a: RigidTransform, b: RigidTransform) -> float:
    """Geodesic distance between the rotation parts, in degrees."""
    return a.inverse().compose(b).rotation_angle_deg()
