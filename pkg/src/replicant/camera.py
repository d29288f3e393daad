"""Pinhole cameras.

Convention: camera space is right-handed with the camera looking along
-z (x right, y up), so a point in front has z < 0 and depth d = -z.
Pixel mapping is u = cx + fx*x/d, v = cy - fy*y/d, which puts +u right
and +v down in the image array. Extrinsics ``cam_to_world`` maps camera
coordinates to world coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Camera:
    K: np.ndarray
    cam_to_world: np.ndarray
    width: int
    height: int
    near: float = 0.01
    view_id: int | None = None

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.cam_to_world = np.asarray(self.cam_to_world, dtype=np.float64).reshape(4, 4)
        self.validate()

    def validate(self) -> None:
        fx, fy = self.K[0, 0], self.K[1, 1]
        if fx <= 0 or fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={fx}, fy={fy}")
        if abs(np.linalg.det(self.K)) < 1e-12:
            raise ValueError("intrinsics K is singular")
        r = self.cam_to_world[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise ValueError("extrinsics rotation block is not orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("extrinsics rotation block has det -1")

    @property
    def fx(self) -> float:
        return float(self.K[0, 0])

    @property
    def fy(self) -> float:
        return float(self.K[1, 1])

    @property
    def cx(self) -> float:
        return float(self.K[0, 2])

    @property
    def cy(self) -> float:
        return float(self.K[1, 2])

    @property
    def position(self) -> np.ndarray:
        return self.cam_to_world[:3, 3]

    @property
    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation block."""
        return self.cam_to_world[:3, :3]

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - self.position) @ self.rotation

    def cam_to_world_points(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.position

    def project(self, points_world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to pixels. Returns (uv (..., 2), depth (...,))."""
        p = self.world_to_cam(points_world)
        depth = -p[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.cx + self.fx * p[..., 0] / depth
            v = self.cy - self.fy * p[..., 1] / depth
        return np.stack([u, v], axis=-1), depth

    def backproject(self, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Lift pixels with depth to world points (inverse of project)."""
        uv = np.asarray(uv, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        x = (uv[..., 0] - self.cx) * depth / self.fx
        y = -(uv[..., 1] - self.cy) * depth / self.fy
        p_cam = np.stack([x, y, -depth], axis=-1)
        return self.cam_to_world_points(p_cam)

    def pixel_rays(self, uv: np.ndarray) -> np.ndarray:
        """Unit bearing vectors in camera space for pixels (..., 2)."""
        uv = np.asarray(uv, dtype=np.float64)
        d = np.stack(
            [
                (uv[..., 0] - self.cx) / self.fx,
                -(uv[..., 1] - self.cy) / self.fy,
                -np.ones(uv.shape[:-1]),
            ],
            axis=-1,
        )
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def resized(self, width: int, height: int) -> "Camera":
        sx, sy = width / self.width, height / self.height
        k = self.K.copy()
        k[0] *= sx
        k[1] *= sy
        return Camera(k, self.cam_to_world, width, height, self.near, self.view_id)


def intrinsics(fx: float, fy: float, cx: float, cy: float) -> np.ndarray:
    return np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])


def look_at(
    eye: np.ndarray, target: np.ndarray, up: np.ndarray = (0.0, 0.0, 1.0)
) -> np.ndarray:
    """Camera-to-world matrix for a camera at ``eye`` facing ``target``.

    World ``up`` maps to image up (decreasing v).
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ValueError("eye and target coincide")
    fwd = fwd / norm
    right = np.cross(fwd, up)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        # forward parallel to up: pick an arbitrary orthogonal right axis
        alt = np.array([1.0, 0, 0]) if abs(fwd[0]) < 0.9 else np.array([0, 1.0, 0])
        right = np.cross(fwd, alt)
        norm = np.linalg.norm(right)
    right = right / norm
    true_up = np.cross(right, fwd)
    m = np.eye(4)
    m[:3, 0] = right
    m[:3, 1] = true_up
    m[:3, 2] = -fwd
    m[:3, 3] = eye
    return m
