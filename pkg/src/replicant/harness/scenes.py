"""Procedural synthetic scenes with exact ground truth.

Objects are gaussian "surfel" clusters sampled on box/cylinder surfaces
with seeded random checker colors (texture matters: the built-in matcher
needs corners). Instances are rigid placements of one archetype, so
instance-to-instance transforms, per-pixel labels, and degradations are
all known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import sh as shlib
from ..camera import Camera, intrinsics, look_at
from ..scene import Gaussians, Scene, logit
from ..segmentation import InstanceSet, MaskSet
from ..render import render_arrays
from ..transforms import RigidTransform, matrix_to_quat, quat_normalize


@dataclass
class SceneSpec:
    archetype: str = "chair"  # box | chair | pillar
    archetype_gaussians: int = 250
    archetype_size: float = 1.0
    placements: list[RigidTransform] = field(default_factory=list)
    instance_color_shift: float = 0.0  # per-instance DC offset magnitude
    background_gaussians: int = 600
    train_views: int = 24
    test_views: int = 8
    test_offset_deg: float = 30.0
    image_size: int = 160
    overlap_threshold: float = 0.75  # min centroid distance in bounding radii
    seed: int = 0


@dataclass
class GroundTruth:
    instances: InstanceSet
    transforms: dict[tuple[int, int], RigidTransform]  # (i, j): instance i -> j
    label_masks: MaskSet  # per train view
    test_label_masks: MaskSet
    train_cameras: list[Camera]
    test_cameras: list[Camera]
    scene_scale: float
    instance_shifts: np.ndarray  # (M, 3) per-instance DC color offsets


@dataclass
class SyntheticScene:
    scene: Scene
    gt: GroundTruth
    spec: SceneSpec


# ---------------------------------------------------------------------------
# archetypes
# ---------------------------------------------------------------------------

PALETTE = np.array(
    [
        [0.90, 0.25, 0.20],
        [0.20, 0.55, 0.90],
        [0.95, 0.80, 0.25],
        [0.30, 0.80, 0.40],
        [0.85, 0.40, 0.75],
        [0.95, 0.95, 0.90],
        [0.15, 0.15, 0.20],
        [0.95, 0.55, 0.15],
    ]
)


def _checker_color(rng_cell, u, v, cell=0.18):
    """Seeded random palette color per checker cell; rng_cell seeds per cell."""
    cu = np.floor(u / cell).astype(int)
    cv = np.floor(v / cell).astype(int)
    h = (cu * 73856093) ^ (cv * 19349663) ^ rng_cell
    return PALETTE[np.abs(h) % len(PALETTE)]


def _boxes_for(kind: str, s: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """(center, half-extent) cuboids in the canonical frame, z up, sitting on z=0."""
    if kind == "box":
        return [(np.array([0, 0, 0.5 * s]), np.array([0.5 * s, 0.4 * s, 0.5 * s]))]
    if kind == "chair":
        leg = 0.05 * s
        seat_h = 0.45 * s
        return [
            (np.array([0, 0, seat_h]), np.array([0.45 * s, 0.45 * s, 0.04 * s])),  # seat
            (np.array([0, 0.43 * s, 0.75 * s]), np.array([0.45 * s, 0.03 * s, 0.32 * s])),  # back
            (np.array([0.38 * s, 0.38 * s, seat_h / 2]), np.array([leg, leg, seat_h / 2])),
            (np.array([-0.38 * s, 0.38 * s, seat_h / 2]), np.array([leg, leg, seat_h / 2])),
            (np.array([0.38 * s, -0.38 * s, seat_h / 2]), np.array([leg, leg, seat_h / 2])),
            (np.array([-0.38 * s, -0.38 * s, seat_h / 2]), np.array([leg, leg, seat_h / 2])),
        ]
    if kind == "pillar":
        return [
            (np.array([0, 0, 0.06 * s]), np.array([0.35 * s, 0.35 * s, 0.06 * s])),  # base
            (np.array([0, 0, 1.3 * s]), np.array([0.33 * s, 0.33 * s, 0.05 * s])),  # capital
        ]
    raise ValueError(f"unknown archetype: {kind}")


def _sample_box_surface(rng, center, half, n):
    """Uniform area-weighted samples on a cuboid surface.

    Returns positions, outward normals, and face-local (u, v) coordinates.
    """
    hx, hy, hz = half
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy]) * 4
    face = rng.choice(6, size=n, p=areas / areas.sum())
    a = rng.uniform(-1, 1, size=n)
    b = rng.uniform(-1, 1, size=n)
    pos = np.zeros((n, 3))
    nrm = np.zeros((n, 3))
    uu = np.zeros(n)
    vv = np.zeros(n)
    for f in range(6):
        m = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        t1, t2 = [i for i in range(3) if i != axis]
        pos[m, axis] = sign * half[axis]
        pos[m, t1] = a[m] * half[t1]
        pos[m, t2] = b[m] * half[t2]
        nrm[m, axis] = sign
        uu[m] = a[m] * half[t1]
        vv[m] = b[m] * half[t2]
    return pos + center, nrm, uu, vv


def _sample_cylinder(rng, radius, z0, z1, n):
    theta = rng.uniform(0, 2 * np.pi, size=n)
    z = rng.uniform(z0, z1, size=n)
    pos = np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)
    nrm = np.stack([np.cos(theta), np.sin(theta), np.zeros(n)], axis=1)
    return pos, nrm, radius * theta, z


def _frame_from_normal(nrm: np.ndarray) -> np.ndarray:
    """Quaternions whose local z-axis aligns with the given normals."""
    n = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    helper = np.where(np.abs(n[:, 2:3]) < 0.9, [[0.0, 0, 1]], [[1.0, 0, 0]])
    t1 = np.cross(helper, n)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    mats = np.stack([t1, t2, n], axis=2)  # columns
    return np.stack([matrix_to_quat(m) for m in mats])


def make_archetype(
    kind: str, n: int, rng: np.random.Generator, size: float = 1.0, feature_dim: int = 16
) -> Gaussians:
    cell_seed = int(rng.integers(1 << 31))
    if kind == "pillar":
        boxes = _boxes_for(kind, size)
        n_shaft = int(n * 0.6)
        counts = [int((n - n_shaft) / len(boxes))] * len(boxes)
        counts[-1] = n - n_shaft - sum(counts[:-1])
        parts = []
        pos, nrm, u, v = _sample_cylinder(rng, 0.25 * size, 0.12 * size, 1.25 * size, n_shaft)
        parts.append((pos, nrm, u, v))
        for (c, h), cnt in zip(boxes, counts):
            parts.append(_sample_box_surface(rng, c, h, cnt))
        pos = np.concatenate([p[0] for p in parts])
        nrm = np.concatenate([p[1] for p in parts])
        u = np.concatenate([p[2] for p in parts])
        v = np.concatenate([p[3] for p in parts])
    else:
        boxes = _boxes_for(kind, size)
        areas = np.array([4 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]) for _, h in boxes])
        counts = np.maximum((areas / areas.sum() * n).astype(int), 1)
        counts[-1] += n - counts.sum()
        parts = [
            _sample_box_surface(rng, c, h, cnt) for (c, h), cnt in zip(boxes, counts)
        ]
        pos = np.concatenate([p[0] for p in parts])
        nrm = np.concatenate([p[1] for p in parts])
        u = np.concatenate([p[2] for p in parts])
        v = np.concatenate([p[3] for p in parts])

    n = len(pos)
    colors = _checker_color(cell_seed, u, v, cell=0.18 * size)
    colors = np.clip(colors + rng.normal(scale=0.02, size=colors.shape), 0.02, 0.98)

    # surfel sizing: tangent extent from surface density, thin along the normal
    area_est = 4.0 * size * size
    spacing = np.sqrt(area_est / n)
    g = Gaussians.empty(n, feature_dim=feature_dim)
    g.positions = pos
    g.rotations = _frame_from_normal(nrm)
    g.log_scales = np.log(
        np.stack(
            [
                np.full(n, spacing * 0.9),
                np.full(n, spacing * 0.9),
                np.full(n, spacing * 0.18),
            ],
            axis=1,
        )
    )
    g.opacity_logits = np.full(n, logit(0.92))
    g.sh[:, 0, :] = shlib.dc_from_rgb(colors)
    g.sh[:, 1:, :] = rng.normal(scale=0.02, size=(n, 15, 3))
    return Gaussians(
        g.positions, g.rotations, g.log_scales, g.opacity_logits, g.sh, g.features
    )


def make_background(
    rng: np.random.Generator, n: int, extent: float, feature_dim: int = 16
) -> Gaussians:
    """Checkered ground disk of the given radius (cameras orbit outside it)."""
    r = extent * np.sqrt(rng.uniform(size=n))
    theta = rng.uniform(0, 2 * np.pi, size=n)
    gp = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    pos = np.concatenate([gp, np.full((n, 1), -0.01 * extent)], axis=1)
    nrm = np.tile([0.0, 0, 1], (n, 1))
    colors = _checker_color(7, gp[:, 0], gp[:, 1], cell=extent / 5) * 0.5 + 0.25

    spacing = np.sqrt(np.pi * extent**2 / n)
    g = Gaussians.empty(n, feature_dim=feature_dim)
    g.positions = pos
    g.rotations = _frame_from_normal(nrm)
    g.log_scales = np.log(
        np.stack(
            [
                np.full(n, spacing * 0.55),
                np.full(n, spacing * 0.55),
                np.full(n, spacing * 0.1),
            ],
            axis=1,
        )
    )
    g.opacity_logits = np.full(n, logit(0.9))
    g.sh[:, 0, :] = shlib.dc_from_rgb(np.clip(colors, 0.02, 0.98))
    return Gaussians(
        g.positions, g.rotations, g.log_scales, g.opacity_logits, g.sh, g.features
    )


# ---------------------------------------------------------------------------
# scene generation
# ---------------------------------------------------------------------------


def default_placements(
    count: int, rng: np.random.Generator, spread: float = 2.2, max_rot_deg: float = 180.0
) -> list[RigidTransform]:
    """Non-overlapping yaw-rotated placements on the ground plane."""
    placements = []
    angles = np.linspace(0, 2 * np.pi, count, endpoint=False) + rng.uniform(0, 0.4)
    for i in range(count):
        yaw = rng.uniform(-np.radians(max_rot_deg), np.radians(max_rot_deg))
        radius = spread * (0.5 + 0.5 * rng.uniform())
        t = np.array([radius * np.cos(angles[i]), radius * np.sin(angles[i]), 0.0])
        placements.append(RigidTransform.from_axis_angle([0, 0, 1], yaw, t))
    return placements


def orbit_cameras(
    center: np.ndarray,
    radius: float,
    count: int,
    image_size: int,
    elevation_deg: float,
    start_id: int,
    azimuth_offset: float = 0.0,
) -> list[Camera]:
    cams = []
    f = image_size * 1.1
    c = (image_size - 1) / 2
    for i in range(count):
        az = 2 * np.pi * i / count + azimuth_offset
        el = np.radians(elevation_deg)
        eye = center + radius * np.array(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
        )
        cams.append(
            Camera(
                K=intrinsics(f, f, c, c),
                cam_to_world=look_at(eye, center),
                width=image_size,
                height=image_size,
                near=0.05,
                view_id=start_id + i,
            )
        )
    return cams


def render_label_masks(
    scene: Scene, instances: InstanceSet, cameras: list[Camera], alpha_gate: float = 0.5
) -> MaskSet:
    """Per-pixel instance labels via one-hot feature compositing."""
    g = scene.gaussians
    m = len(instances.instances)
    onehot = np.zeros((len(g), m + 1))
    onehot[:, 0] = 1.0
    for q, inst in enumerate(instances.instances):
        onehot[inst, 0] = 0.0
        onehot[inst, q + 1] = 1.0
    out = MaskSet()
    for cam in cameras:
        r, _ = render_arrays(
            g.positions,
            g.rotations,
            g.log_scales,
            g.opacity_logits,
            g.sh,
            onehot,
            g.frames,
            cam,
            scene.background,
            with_features=True,
        )
        weights = r.feature  # (H, W, M+1), background channel first
        labels = np.argmax(weights, axis=2).astype(np.int32)
        labels[r.alpha < alpha_gate] = 0
        out.labels[cam.view_id] = labels
    return out


def gen_scene(spec: SceneSpec) -> SyntheticScene:
    rng = np.random.default_rng(spec.seed)
    placements = spec.placements or default_placements(2, rng)
    m = len(placements)

    archetype = make_archetype(
        spec.archetype, spec.archetype_gaussians, rng, spec.archetype_size
    )
    bound_r = np.linalg.norm(
        archetype.positions - archetype.positions.mean(axis=0), axis=1
    ).max()
    for i in range(m):
        for j in range(i + 1, m):
            d = np.linalg.norm(placements[i].translation - placements[j].translation)
            if d < spec.overlap_threshold * 2 * bound_r:
                raise ValueError(
                    f"instance placements {i} and {j} overlap (distance {d:.3f})"
                )

    max_place = max((np.linalg.norm(p.translation) for p in placements), default=0.0)
    ground_r = max_place + 1.8 * bound_r
    background = make_background(rng, spec.background_gaussians, extent=ground_r)
    shifts = np.zeros((m, 3))
    parts = [background]
    for q, pl in enumerate(placements):
        inst = archetype.transformed(pl)
        if spec.instance_color_shift > 0:
            shifts[q] = rng.uniform(-1, 1, size=3) * spec.instance_color_shift
            inst.sh[:, 0, :] += shlib.dc_from_rgb(shifts[q])
        parts.append(inst)
    gaussians = Gaussians.concatenate(parts)

    nb = len(background)
    na = len(archetype)
    instance_sets = [np.arange(nb + q * na, nb + (q + 1) * na) for q in range(m)]
    instances = InstanceSet(instances=instance_sets, groups={"group0": list(range(m))})

    all_pos = gaussians.positions
    center = 0.5 * (all_pos.min(axis=0) + all_pos.max(axis=0))
    scene_scale = float(np.linalg.norm(all_pos.max(axis=0) - all_pos.min(axis=0)))
    inst_center = np.mean([p.translation for p in placements], axis=0) + np.array(
        [0, 0, 0.5 * spec.archetype_size]
    )
    orbit_r = max(
        2.0 * max(np.linalg.norm(p.translation - inst_center) + bound_r for p in placements),
        1.45 * ground_r,  # keep cameras clear of the ground disk
    )
    train_cams = orbit_cameras(inst_center, orbit_r, spec.train_views, spec.image_size, 28.0, 0)
    test_cams = orbit_cameras(
        inst_center,
        orbit_r,
        spec.test_views,
        spec.image_size,
        28.0 + spec.test_offset_deg,
        1000,
        azimuth_offset=np.pi / spec.train_views,
    )

    scene = Scene(gaussians, train_cams + test_cams, background=np.array([0.05, 0.06, 0.08]))
    transforms = {}
    for i in range(m):
        for j in range(m):
            if i != j:
                transforms[(i, j)] = placements[j].compose(placements[i].inverse())

    label_masks = render_label_masks(scene, instances, train_cams)
    test_label_masks = render_label_masks(scene, instances, test_cams)
    gt = GroundTruth(
        instances=instances,
        transforms=transforms,
        label_masks=label_masks,
        test_label_masks=test_label_masks,
        train_cameras=train_cams,
        test_cameras=test_cams,
        scene_scale=scene_scale,
        instance_shifts=shifts,
    )
    return SyntheticScene(scene=scene, gt=gt, spec=spec)


# ---------------------------------------------------------------------------
# degradation
# ---------------------------------------------------------------------------


def degrade(
    scene: Scene,
    instance_indices: np.ndarray,
    mode: str,
    rng: np.random.Generator | None = None,
    prune_fraction: float = 0.4,
    blur_sigma: float = 0.1,
    occluder_cameras: list[Camera] | None = None,
) -> tuple[Scene, np.ndarray]:
    """Damage one instance. Returns (scene, index_map old->new, -1 removed)."""
    rng = rng or np.random.default_rng(0)
    g = scene.gaussians
    n = len(g)
    idx = np.asarray(instance_indices, dtype=int)
    if mode == "prune":
        k = int(round(len(idx) * prune_fraction))
        drop = rng.choice(idx, size=k, replace=False) if k else np.zeros(0, dtype=int)
        keep = np.setdiff1d(np.arange(n), drop)
        index_map = np.full(n, -1, dtype=int)
        index_map[keep] = np.arange(len(keep))
        return Scene(g.subset(keep), scene.cameras, scene.background.copy()), index_map
    if mode == "blur":
        out = scene.copy()
        out.gaussians.sh[idx, 1:, :] = 0.0
        if blur_sigma > 0:
            out.gaussians.sh[idx, 0, :] += rng.normal(
                scale=blur_sigma, size=(len(idx), 3)
            )
        return out, np.arange(n)
    if mode == "occlude":
        cams = occluder_cameras or scene.cameras[:4]
        inst_c = g.positions[idx].mean(axis=0)
        cam_c = np.mean([c.position for c in cams], axis=0)
        mid = 0.55 * inst_c + 0.45 * cam_c
        toward = cam_c - inst_c
        toward /= np.linalg.norm(toward)
        slab_rng = np.random.default_rng(rng.integers(1 << 31))
        slab = make_archetype("box", 120, slab_rng, size=0.8)
        slab = slab.transformed(RigidTransform(translation=mid - np.array([0, 0, 0.4])))
        merged = Gaussians.concatenate([g, slab])
        return Scene(merged, scene.cameras, scene.background.copy()), np.arange(n)
    raise ValueError(f"unknown degrade mode: {mode}")
