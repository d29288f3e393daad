"""Scene data model: anisotropic 3D gaussians with SH color and a feature vector.

Storage parameterization matches splat-file conventions: opacity as a
pre-sigmoid logit, scales as log standard deviations, rotation as a unit
quaternion (w, x, y, z). Each gaussian also carries an appearance-frame
quaternion: SH is evaluated at the view direction rotated into that frame,
which is how rigidly moved gaussians keep their look without rotating SH
coefficients (identity for gaussians that never moved).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sh as shlib
from .camera import Camera
from .transforms import RigidTransform, quat_multiply, quat_normalize, quat_to_matrix

DEFAULT_FEATURE_DIM = 16


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def logit(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass
class GaussianPrimitive:
    """Single-gaussian view; arrays are copies, not aliases into the container."""

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    sh: np.ndarray  # (K, 3)
    feature: np.ndarray  # (D,)
    frame: np.ndarray  # appearance-frame quaternion

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def covariance(self) -> np.ndarray:
        r = quat_to_matrix(self.rotation)
        return r @ np.diag(self.scale**2) @ r.T


class Gaussians:
    """Struct-of-arrays gaussian container with list-like access."""

    def __init__(
        self,
        positions: np.ndarray,
        rotations: np.ndarray,
        log_scales: np.ndarray,
        opacity_logits: np.ndarray,
        sh: np.ndarray,
        features: np.ndarray | None = None,
        frames: np.ndarray | None = None,
    ):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.rotations = quat_normalize(
            np.ascontiguousarray(rotations, dtype=np.float64).reshape(n, 4)
        )
        self.log_scales = np.ascontiguousarray(log_scales, dtype=np.float64).reshape(n, 3)
        self.opacity_logits = np.ascontiguousarray(
            opacity_logits, dtype=np.float64
        ).reshape(n)
        self.sh = np.ascontiguousarray(sh, dtype=np.float64).reshape(n, -1, 3)
        if features is None:
            features = np.zeros((n, DEFAULT_FEATURE_DIM))
        self.features = np.ascontiguousarray(features, dtype=np.float64).reshape(n, -1)
        if frames is None:
            frames = np.tile(np.array([1.0, 0, 0, 0]), (n, 1))
        self.frames = quat_normalize(
            np.ascontiguousarray(frames, dtype=np.float64).reshape(n, 4)
        )

    @classmethod
    def empty(
        cls, n: int, sh_degree: int = shlib.DEFAULT_DEGREE, feature_dim: int = DEFAULT_FEATURE_DIM
    ) -> "Gaussians":
        k = shlib.num_coeffs(sh_degree)
        rot = np.zeros((n, 4))
        rot[:, 0] = 1.0
        return cls(
            positions=np.zeros((n, 3)),
            rotations=rot,
            log_scales=np.zeros((n, 3)),
            opacity_logits=np.zeros(n),
            sh=np.zeros((n, k, 3)),
            features=np.zeros((n, feature_dim)),
        )

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            position=self.positions[i].copy(),
            rotation=self.rotations[i].copy(),
            log_scale=self.log_scales[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            sh=self.sh[i].copy(),
            feature=self.features[i].copy(),
            frame=self.frames[i].copy(),
        )

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh.shape[1]))) - 1

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def covariances(self) -> np.ndarray:
        r = quat_to_matrix(self.rotations)
        s2 = self.scales**2
        return np.einsum("nij,nj,nkj->nik", r, s2, r)

    def copy(self) -> "Gaussians":
        return Gaussians(
            self.positions.copy(),
            self.rotations.copy(),
            self.log_scales.copy(),
            self.opacity_logits.copy(),
            self.sh.copy(),
            self.features.copy(),
            self.frames.copy(),
        )

    def subset(self, indices: np.ndarray) -> "Gaussians":
        idx = np.asarray(indices)
        return Gaussians(
            self.positions[idx],
            self.rotations[idx],
            self.log_scales[idx],
            self.opacity_logits[idx],
            self.sh[idx],
            self.features[idx],
            self.frames[idx],
        )

    @staticmethod
    def concatenate(parts: list["Gaussians"]) -> "Gaussians":
        return Gaussians(
            np.concatenate([p.positions for p in parts]),
            np.concatenate([p.rotations for p in parts]),
            np.concatenate([p.log_scales for p in parts]),
            np.concatenate([p.opacity_logits for p in parts]),
            np.concatenate([p.sh for p in parts]),
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.frames for p in parts]),
        )

    def transformed(self, rt: RigidTransform) -> "Gaussians":
        """Rigidly move all gaussians; SH coefficients stay put, the
        appearance frame absorbs the rotation."""
        out = self.copy()
        out.positions = rt.apply(self.positions)
        out.rotations = quat_normalize(quat_multiply(rt.rotation, self.rotations))
        out.frames = quat_normalize(quat_multiply(rt.rotation, self.frames))
        return out


def transform_gaussian(g: GaussianPrimitive, rt: RigidTransform) -> GaussianPrimitive:
    """Rigidly move a single gaussian (see Gaussians.transformed)."""
    return GaussianPrimitive(
        position=rt.apply(g.position),
        rotation=quat_normalize(quat_multiply(rt.rotation, g.rotation)),
        log_scale=g.log_scale.copy(),
        opacity_logit=g.opacity_logit,
        sh=g.sh.copy(),
        feature=g.feature.copy(),
        frame=quat_normalize(quat_multiply(rt.rotation, g.frame)),
    )


@dataclass
class Scene:
    gaussians: Gaussians
    cameras: list[Camera] = field(default_factory=list)
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        ids = [c.view_id for c in self.cameras]
        if len(ids) != len(set(ids)):
            raise ValueError("camera view ids must be unique")

    def camera_by_id(self, view_id: int) -> Camera:
        for c in self.cameras:
            if c.view_id == view_id:
                return c
        raise KeyError(f"unknown view id: {view_id}")

    @property
    def view_ids(self) -> list[int]:
        return [c.view_id for c in self.cameras]

    def copy(self) -> "Scene":
        return Scene(self.gaussians.copy(), list(self.cameras), self.background.copy())
