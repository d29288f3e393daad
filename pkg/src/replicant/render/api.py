"""Differentiable splat rendering: color, alpha, depth, and feature channels.

Pipeline per view: project gaussians to screen splats, evaluate SH color at
the per-gaussian view direction (rotated into each gaussian's appearance
frame), sort front to back, composite with the selected backend kernel.
Backward entry points return exact reverse-mode gradients for every gaussian
parameter; the instanced variant also differentiates per-instance rigid poses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import sh as shlib
from ..camera import Camera
from ..scene import Gaussians, Scene, sigmoid
from ..transforms import (
    RigidTransform,
    quat_multiply,
    quat_multiply_grads,
    quat_to_matrix,
    rotation_matrix_grad_to_quat,
)
from . import backend
from .projection import ProjectedSplats, project_gaussians, project_gaussians_backward

DEPTH_ALPHA_EPS = 1e-4


@dataclass
class RenderOutput:
    color: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    depth: np.ndarray  # (H, W), alpha-weighted mean, 0 where alpha ~ 0
    feature: np.ndarray | None = None  # (H, W, D)


@dataclass
class RenderAdjoints:
    """Per-pixel upstream gradients; any field may stay None."""

    color: np.ndarray | None = None
    alpha: np.ndarray | None = None
    depth: np.ndarray | None = None
    feature: np.ndarray | None = None


@dataclass
class ParamGrads:
    position: np.ndarray  # (N, 3)
    rotation: np.ndarray  # (N, 4)
    log_scale: np.ndarray  # (N, 3)
    opacity_logit: np.ndarray  # (N,)
    sh: np.ndarray  # (N, K, 3)
    feature: np.ndarray  # (N, D)
    frame: np.ndarray  # (N, 4)

    @classmethod
    def zeros(cls, n: int, k: int, d: int) -> "ParamGrads":
        return cls(
            position=np.zeros((n, 3)),
            rotation=np.zeros((n, 4)),
            log_scale=np.zeros((n, 3)),
            opacity_logit=np.zeros(n),
            sh=np.zeros((n, k, 3)),
            feature=np.zeros((n, d)),
            frame=np.zeros((n, 4)),
        )


@dataclass
class RenderContext:
    """Forward-pass state needed by the backward pass."""

    cam: Camera
    proj: ProjectedSplats
    order: np.ndarray
    dirs: np.ndarray
    dir_norms: np.ndarray
    dir_eval: np.ndarray
    values_sorted: np.ndarray
    rect_sorted: np.ndarray
    opacity_sorted: np.ndarray
    opacity_vis: np.ndarray  # float64, unsorted visible subset
    bg_stack: np.ndarray
    t_final: np.ndarray
    lastk: np.ndarray
    raw: np.ndarray
    feature_dim: int
    dtype: np.dtype
    n_total: int
    rotations: np.ndarray
    log_scales: np.ndarray
    frames: np.ndarray
    sh_coeffs: np.ndarray


def render_arrays(
    positions: np.ndarray,
    rotations: np.ndarray,
    log_scales: np.ndarray,
    opacity_logits: np.ndarray,
    sh_coeffs: np.ndarray,
    features: np.ndarray,
    frames: np.ndarray,
    cam: Camera,
    bg_color: np.ndarray,
    with_features: bool = True,
    dtype=np.float32,
) -> tuple[RenderOutput, RenderContext]:
    if len(positions) < 1:
        raise ValueError("render needs at least one gaussian")
    dtype = np.dtype(dtype)
    positions = np.asarray(positions, dtype=np.float64)
    opac_all = sigmoid(np.asarray(opacity_logits, dtype=np.float64))
    proj = project_gaussians(positions, rotations, log_scales, cam, opacities=opac_all)
    idx = proj.keep
    m = len(idx)
    feature_dim = features.shape[1] if with_features else 0

    dirs_raw = positions[idx] - cam.position
    dir_norms = np.linalg.norm(dirs_raw, axis=1)
    dirs = dirs_raw / np.maximum(dir_norms, 1e-12)[:, None]
    frames = np.asarray(frames, dtype=np.float64)
    frame_mats = quat_to_matrix(frames[idx]) if m else np.zeros((0, 3, 3))
    dir_eval = np.einsum("nji,nj->ni", frame_mats, dirs)
    sh_coeffs = np.asarray(sh_coeffs, dtype=np.float64)
    degree = int(round(np.sqrt(sh_coeffs.shape[1]))) - 1
    colors = shlib.eval_sh(sh_coeffs[idx], dir_eval, degree)
    opac = opac_all[idx]

    feats = np.asarray(features, dtype=np.float64)[idx] if with_features else np.zeros((m, 0))
    values = np.concatenate(
        [colors, np.ones((m, 1)), proj.depth[:, None], feats], axis=1
    )
    bg_stack = np.concatenate(
        [np.asarray(bg_color, dtype=np.float64), np.zeros(2 + feature_dim)]
    )

    order = np.argsort(proj.depth, kind="stable")
    kern = backend.active()
    values_sorted = np.ascontiguousarray(values[order], dtype=dtype)
    rect_sorted = np.ascontiguousarray(proj.rect[order])
    opacity_sorted = np.ascontiguousarray(opac[order], dtype=dtype)
    out, t_final, lastk = kern.rasterize_forward(
        np.ascontiguousarray(proj.mean2d[order], dtype=dtype),
        np.ascontiguousarray(proj.conic[order], dtype=dtype),
        opacity_sorted,
        values_sorted,
        rect_sorted,
        bg_stack.astype(dtype),
        cam.height,
        cam.width,
    )

    alpha_img = out[:, :, 3].astype(np.float64)
    raw_depth = out[:, :, 4].astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth_img = np.where(alpha_img > DEPTH_ALPHA_EPS, raw_depth / alpha_img, 0.0)
    output = RenderOutput(
        color=out[:, :, 0:3].astype(np.float64),
        alpha=alpha_img,
        depth=depth_img,
        feature=out[:, :, 5:].astype(np.float64) if with_features else None,
    )
    ctx = RenderContext(
        cam=cam,
        proj=proj,
        order=order,
        dirs=dirs,
        dir_norms=dir_norms,
        dir_eval=dir_eval,
        values_sorted=values_sorted,
        rect_sorted=rect_sorted,
        opacity_sorted=opacity_sorted,
        opacity_vis=opac,
        bg_stack=bg_stack,
        t_final=t_final,
        lastk=lastk,
        raw=out,
        feature_dim=feature_dim,
        dtype=dtype,
        n_total=len(positions),
        rotations=np.asarray(rotations, dtype=np.float64),
        log_scales=np.asarray(log_scales, dtype=np.float64),
        frames=frames,
        sh_coeffs=sh_coeffs,
    )
    return output, ctx


def render_arrays_backward(ctx: RenderContext, adj: RenderAdjoints) -> ParamGrads:
    cam = ctx.cam
    h, w = cam.height, cam.width
    d = ctx.feature_dim
    n = ctx.n_total
    k = ctx.sh_coeffs.shape[1]
    degree = int(round(np.sqrt(k))) - 1

    g_color = (
        np.zeros((h, w, 3)) if adj.color is None else np.asarray(adj.color, dtype=np.float64)
    )
    g_alpha = (
        np.zeros((h, w)) if adj.alpha is None else np.asarray(adj.alpha, dtype=np.float64)
    )
    g_feat = (
        np.zeros((h, w, d)) if adj.feature is None else np.asarray(adj.feature, dtype=np.float64)
    )

    alpha_img = ctx.raw[:, :, 3].astype(np.float64)
    raw_depth = ctx.raw[:, :, 4].astype(np.float64)
    g_raw = np.zeros((h, w))
    if adj.depth is not None:
        gd = np.asarray(adj.depth, dtype=np.float64)
        gated = alpha_img > DEPTH_ALPHA_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            g_raw = np.where(gated, gd / alpha_img, 0.0)
            g_alpha = g_alpha + np.where(gated, -gd * raw_depth / alpha_img**2, 0.0)

    grad_out = np.concatenate(
        [g_color, g_alpha[:, :, None], g_raw[:, :, None], g_feat], axis=2
    )

    kern = backend.active()
    d_values_s, d_opac_s, d_mean2d_s, d_conic_s = kern.rasterize_backward(
        np.ascontiguousarray(ctx.proj.mean2d[ctx.order], dtype=ctx.dtype),
        np.ascontiguousarray(ctx.proj.conic[ctx.order], dtype=ctx.dtype),
        ctx.opacity_sorted,
        ctx.values_sorted,
        ctx.rect_sorted,
        ctx.bg_stack.astype(ctx.dtype),
        ctx.t_final,
        ctx.lastk,
        np.ascontiguousarray(grad_out, dtype=ctx.dtype),
    )

    inv = np.argsort(ctx.order)
    d_values = np.asarray(d_values_s, dtype=np.float64)[inv]
    d_opac = np.asarray(d_opac_s, dtype=np.float64)[inv]
    d_mean2d = np.asarray(d_mean2d_s, dtype=np.float64)[inv]
    d_conic = np.asarray(d_conic_s, dtype=np.float64)[inv]

    idx = ctx.proj.keep
    d_colors = d_values[:, 0:3]
    d_depth_per = d_values[:, 4]
    d_feats = d_values[:, 5:]

    # SH chain: color = basis(dir_eval) . coeffs
    basis = shlib.sh_basis(ctx.dir_eval, degree)
    d_sh_vis = basis[:, :, None] * d_colors[:, None, :]
    basis_g = shlib.sh_basis_grad(ctx.dir_eval, degree)
    coeff_adj = np.einsum("nkc,nc->nk", ctx.sh_coeffs[idx], d_colors)
    d_dir_eval = np.einsum("nkj,nk->nj", basis_g, coeff_adj)

    frame_mats = quat_to_matrix(ctx.frames[idx])
    d_dir = np.einsum("nij,nj->ni", frame_mats, d_dir_eval)
    dot = np.sum(ctx.dirs * d_dir, axis=1, keepdims=True)
    d_pos_sh = (d_dir - ctx.dirs * dot) / np.maximum(ctx.dir_norms, 1e-12)[:, None]
    d_frame_mat = np.einsum("nj,ni->nji", ctx.dirs, d_dir_eval)
    d_frame_vis = rotation_matrix_grad_to_quat(ctx.frames[idx], d_frame_mat)

    d_pos_vis, d_quat_vis, d_ls_vis = project_gaussians_backward(
        ctx.proj, ctx.rotations, ctx.log_scales, cam, d_mean2d, d_conic, d_depth_per
    )
    d_pos_vis = d_pos_vis + d_pos_sh

    grads = ParamGrads.zeros(n, k, d)
    grads.position[idx] = d_pos_vis
    grads.rotation[idx] = d_quat_vis
    grads.log_scale[idx] = d_ls_vis
    grads.opacity_logit[idx] = d_opac * ctx.opacity_vis * (1 - ctx.opacity_vis)
    grads.sh[idx] = d_sh_vis
    if d:
        grads.feature[idx] = d_feats
    grads.frame[idx] = d_frame_vis
    return grads


# ---------------------------------------------------------------------------
# Scene-level entry points
# ---------------------------------------------------------------------------


def render(
    scene: Scene,
    cam: Camera,
    with_features: bool = False,
    dtype=np.float32,
    return_ctx: bool = False,
):
    g = scene.gaussians
    out, ctx = render_arrays(
        g.positions,
        g.rotations,
        g.log_scales,
        g.opacity_logits,
        g.sh,
        g.features,
        g.frames,
        cam,
        scene.background,
        with_features=with_features,
        dtype=dtype,
    )
    return (out, ctx) if return_ctx else out


def render_backward(
    scene: Scene,
    cam: Camera,
    adj: RenderAdjoints,
    ctx: RenderContext | None = None,
    dtype=np.float32,
) -> ParamGrads:
    """Gradients of the compositing pass; recomputes the forward if no ctx."""
    if ctx is None:
        with_features = adj.feature is not None
        _, ctx = render(scene, cam, with_features=with_features, dtype=dtype, return_ctx=True)
    return render_arrays_backward(ctx, adj)


def project_gaussian(g, cam: Camera):
    """Project a single gaussian; returns (mean2d, cov2d, depth) or None if culled."""
    proj = project_gaussians(
        g.position[None], g.rotation[None], g.log_scale[None], cam
    )
    if len(proj.keep) == 0:
        return None
    c = proj.cov2d[0]
    cov2d = np.array([[c[0], c[1]], [c[1], c[2]]])
    return proj.mean2d[0], cov2d, float(proj.depth[0])


# ---------------------------------------------------------------------------
# Instanced rendering (template references with per-instance poses)
# ---------------------------------------------------------------------------


@dataclass
class InstancePoseGrad:
    rotation: np.ndarray  # (4,)
    translation: np.ndarray  # (3,)


@dataclass
class InstanceRenderGrads:
    shared: ParamGrads  # grads on the template arrays (sh summed over instances)
    sh_per_instance: np.ndarray  # (M, N, K, 3)
    poses: list[InstancePoseGrad]
    background: ParamGrads | None


@dataclass
class InstanceRenderContext:
    ctx: RenderContext
    n_bg: int
    n_template: int
    poses: list[RigidTransform]
    template_positions: np.ndarray
    template_rotations: np.ndarray
    template_frames: np.ndarray


def _materialize_instances(
    background: Gaussians | None,
    template: Gaussians,
    poses: list[RigidTransform],
    instance_sh: list[np.ndarray] | None,
):
    parts_pos, parts_rot, parts_ls, parts_op, parts_sh, parts_feat, parts_frame = (
        [],
        [],
        [],
        [],
        [],
        [],
        [],
    )
    if background is not None and len(background) > 0:
        parts_pos.append(background.positions)
        parts_rot.append(background.rotations)
        parts_ls.append(background.log_scales)
        parts_op.append(background.opacity_logits)
        parts_sh.append(background.sh)
        parts_feat.append(background.features)
        parts_frame.append(background.frames)
    for q, pose in enumerate(poses):
        r = quat_to_matrix(pose.rotation)
        parts_pos.append(template.positions @ r.T + pose.translation)
        parts_rot.append(quat_multiply(pose.rotation, template.rotations))
        parts_ls.append(template.log_scales)
        parts_op.append(template.opacity_logits)
        parts_sh.append(template.sh if instance_sh is None else instance_sh[q])
        parts_feat.append(template.features)
        parts_frame.append(quat_multiply(pose.rotation, template.frames))
    return (
        np.concatenate(parts_pos),
        np.concatenate(parts_rot),
        np.concatenate(parts_ls),
        np.concatenate(parts_op),
        np.concatenate(parts_sh),
        np.concatenate(parts_feat),
        np.concatenate(parts_frame),
    )


def render_instance_view(
    background: Gaussians | None,
    template: Gaussians,
    poses: list[RigidTransform],
    cam: Camera,
    bg_color: np.ndarray,
    instance_sh: list[np.ndarray] | None = None,
    with_features: bool = False,
    dtype=np.float32,
    return_ctx: bool = False,
):
    """Render background plus one template copy per pose.

    ``instance_sh`` optionally overrides the template SH coefficients per
    instance (shape (N, K, 3) each), e.g. with mixed shared+offset values.
    """
    arrays = _materialize_instances(background, template, poses, instance_sh)
    out, ctx = render_arrays(
        *arrays, cam, bg_color, with_features=with_features, dtype=dtype
    )
    if not return_ctx:
        return out
    ictx = InstanceRenderContext(
        ctx=ctx,
        n_bg=len(background) if background is not None else 0,
        n_template=len(template),
        poses=list(poses),
        template_positions=template.positions.copy(),
        template_rotations=template.rotations.copy(),
        template_frames=template.frames.copy(),
    )
    return out, ictx


def render_instance_view_backward(
    ictx: InstanceRenderContext, adj: RenderAdjoints, want_background: bool = False
) -> InstanceRenderGrads:
    flat = render_arrays_backward(ictx.ctx, adj)
    nb, nt = ictx.n_bg, ictx.n_template
    k = flat.sh.shape[1]
    d = flat.feature.shape[1]
    m = len(ictx.poses)

    bg_grads = None
    if want_background and nb:
        bg_grads = ParamGrads(
            position=flat.position[:nb],
            rotation=flat.rotation[:nb],
            log_scale=flat.log_scale[:nb],
            opacity_logit=flat.opacity_logit[:nb],
            sh=flat.sh[:nb],
            feature=flat.feature[:nb],
            frame=flat.frame[:nb],
        )

    shared = ParamGrads.zeros(nt, k, d)
    sh_per_instance = np.zeros((m, nt, k, 3))
    pose_grads = []
    p_t = ictx.template_positions
    for q, pose in enumerate(ictx.poses):
        lo = nb + q * nt
        hi = lo + nt
        d_pw = flat.position[lo:hi]
        d_qw = flat.rotation[lo:hi]
        d_fw = flat.frame[lo:hi]

        r = quat_to_matrix(pose.rotation)
        shared.position += d_pw @ r
        d_rot_mat = np.einsum("ni,nk->ik", d_pw, p_t)
        d_pose_quat = rotation_matrix_grad_to_quat(pose.rotation, d_rot_mat)
        d_pose_t = d_pw.sum(axis=0)

        pose_b = np.broadcast_to(pose.rotation, (nt, 4))
        d_a, d_b = quat_multiply_grads(pose_b, ictx.template_rotations, d_qw)
        shared.rotation += d_b
        d_pose_quat = d_pose_quat + d_a.sum(axis=0)

        d_af, d_bf = quat_multiply_grads(pose_b, ictx.template_frames, d_fw)
        shared.frame += d_bf
        d_pose_quat = d_pose_quat + d_af.sum(axis=0)

        shared.log_scale += flat.log_scale[lo:hi]
        shared.opacity_logit += flat.opacity_logit[lo:hi]
        shared.feature += flat.feature[lo:hi]
        sh_per_instance[q] = flat.sh[lo:hi]
        shared.sh += flat.sh[lo:hi]
        pose_grads.append(InstancePoseGrad(rotation=d_pose_quat, translation=d_pose_t))

    return InstanceRenderGrads(
        shared=shared,
        sh_per_instance=sh_per_instance,
        poses=pose_grads,
        background=bg_grads,
    )
