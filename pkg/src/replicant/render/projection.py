"""EWA projection of 3D gaussians to screen-space splats, forward and backward.

Shared by both rasterizer backends; everything here is O(N) and vectorized,
the per-pixel work lives in the backend kernels. The backward functions
return gradients w.r.t. world-space parameters given adjoints on the 2D
splat quantities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import Camera
from ..transforms import quat_to_matrix, rotation_matrix_grad_to_quat

COV2D_FLOOR = 0.3  # pixel^2 low-pass clamp on the 2D covariance diagonal
RADIUS_SIGMA = 3.0  # image-intersection culling uses the 3-sigma extent
ALPHA_EPS = 1e-9  # contributions below this are skipped by the kernels
LOG_ALPHA_EPS = float(np.log(ALPHA_EPS))


@dataclass
class ProjectedSplats:
    """Per-gaussian screen-space quantities for the visible subset.

    ``keep`` indexes into the original arrays; all other fields are already
    compacted to the visible subset (unsorted).
    """

    keep: np.ndarray  # (M,) int indices into the input arrays
    mean2d: np.ndarray  # (M, 2)
    conic: np.ndarray  # (M, 3) inverse-covariance entries (a, b, c)
    depth: np.ndarray  # (M,)
    rect: np.ndarray  # (M, 4) int32: x0, x1, y0, y1 pixel bounds
    radius: np.ndarray  # (M,)
    # saved intermediates for the backward pass
    p_cam: np.ndarray  # (M, 3)
    cov_cam: np.ndarray  # (M, 3, 3)
    cov2d_pre: np.ndarray  # (M, 3) before the diagonal clamp
    cov2d: np.ndarray  # (M, 3) after the clamp
    jac: np.ndarray  # (M, 2, 3)


def project_gaussians(
    positions: np.ndarray,
    rotations: np.ndarray,
    log_scales: np.ndarray,
    cam: Camera,
    opacities: np.ndarray | None = None,
) -> ProjectedSplats:
    """Project to screen splats; cull by near plane and 3-sigma image miss.

    The rasterized pixel rect extends to where the splat's alpha falls to
    ALPHA_EPS (needs ``opacities``), so the kernel cutoff never produces a
    visible seam; without opacities it falls back to the 3-sigma rect.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    r_c2w = cam.rotation
    p_cam = (positions - cam.position) @ r_c2w
    depth = -p_cam[:, 2]
    in_front = depth > cam.near

    # covariance in camera space
    rot = quat_to_matrix(rotations)
    s = np.exp(np.asarray(log_scales, dtype=np.float64))
    m = rot * s[:, None, :]
    cov_w = m @ m.transpose(0, 2, 1)
    w = r_c2w.T
    cov_c = np.einsum("ij,njk,lk->nil", w, cov_w, w)

    fx, fy = cam.fx, cam.fy
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(in_front, depth, 1.0)
        x, y = p_cam[:, 0], p_cam[:, 1]
        u = cam.cx + fx * x / d
        v = cam.cy - fy * y / d
        jac = np.zeros((n, 2, 3))
        jac[:, 0, 0] = fx / d
        jac[:, 0, 2] = fx * x / d**2
        jac[:, 1, 1] = -fy / d
        jac[:, 1, 2] = -fy * y / d**2

    cov2d_mat = np.einsum("nij,njk,nlk->nil", jac, cov_c, jac)
    ca_pre = cov2d_mat[:, 0, 0]
    cb = cov2d_mat[:, 0, 1]
    cc_pre = cov2d_mat[:, 1, 1]
    ca = np.maximum(ca_pre, COV2D_FLOOR)
    cc = np.maximum(cc_pre, COV2D_FLOOR)
    det = ca * cc - cb * cb

    mid = 0.5 * (ca + cc)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    sigma_max = np.sqrt(np.maximum(lam_max, 0.0))
    radius = RADIUS_SIGMA * sigma_max

    # culling rect: 3-sigma extent against the image bounds
    cull_x0 = np.floor(u - radius)
    cull_x1 = np.floor(u + radius) + 1
    cull_y0 = np.floor(v - radius)
    cull_y1 = np.floor(v + radius) + 1
    visible = (
        (np.minimum(cull_x1, cam.width) > np.maximum(cull_x0, 0))
        & (np.minimum(cull_y1, cam.height) > np.maximum(cull_y0, 0))
    )
    keep = in_front & (det > 1e-12) & visible

    # coverage rect: out to where alpha = opacity * gaussian falls to ALPHA_EPS
    if opacities is not None:
        log_o = np.log(np.maximum(np.asarray(opacities, dtype=np.float64), 1e-300))
        r2 = 2.0 * (log_o - LOG_ALPHA_EPS)
        cover = sigma_max * np.sqrt(np.maximum(r2, 0.0))
        keep = keep & (r2 > 0)
    else:
        cover = radius
    x0 = np.clip(np.floor(u - cover), 0, cam.width)
    x1 = np.clip(np.floor(u + cover) + 1, 0, cam.width)
    y0 = np.clip(np.floor(v - cover), 0, cam.height)
    y1 = np.clip(np.floor(v + cover) + 1, 0, cam.height)
    keep = keep & (x1 > x0) & (y1 > y0)
    idx = np.flatnonzero(keep)

    with np.errstate(divide="ignore", invalid="ignore"):
        conic = np.stack([cc / det, -cb / det, ca / det], axis=-1)

    rect = np.stack([x0, x1, y0, y1], axis=-1).astype(np.int32)
    return ProjectedSplats(
        keep=idx,
        mean2d=np.stack([u, v], axis=-1)[idx],
        conic=conic[idx],
        depth=depth[idx],
        rect=rect[idx],
        radius=radius[idx],
        p_cam=p_cam[idx],
        cov_cam=cov_c[idx],
        cov2d_pre=np.stack([ca_pre, cb, cc_pre], axis=-1)[idx],
        cov2d=np.stack([ca, cb, cc], axis=-1)[idx],
        jac=jac[idx],
    )


def project_gaussians_backward(
    proj: ProjectedSplats,
    rotations: np.ndarray,
    log_scales: np.ndarray,
    cam: Camera,
    d_mean2d: np.ndarray,
    d_conic: np.ndarray,
    d_depth: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adjoints on (mean2d, conic, per-gaussian depth) -> gradients on
    (position, rotation quaternion, log scale) for the visible subset."""
    fx, fy = cam.fx, cam.fy
    idx = proj.keep
    rot_q = np.asarray(rotations, dtype=np.float64)[idx]
    s = np.exp(np.asarray(log_scales, dtype=np.float64)[idx])
    x, y = proj.p_cam[:, 0], proj.p_cam[:, 1]
    d = proj.depth

    # conic -> cov2d (a, b, c treated as independent scalars)
    ca, cb, cc = proj.cov2d[:, 0], proj.cov2d[:, 1], proj.cov2d[:, 2]
    det = ca * cc - cb * cb
    inv_det2 = 1.0 / det**2
    ga, gb, gc = d_conic[:, 0], d_conic[:, 1], d_conic[:, 2]
    d_ca = (-cc * cc * ga + cb * cc * gb - cb * cb * gc) * inv_det2
    d_cb = (2 * cb * cc * ga - (det + 2 * cb * cb) * gb + 2 * ca * cb * gc) * inv_det2
    d_cc = (-cb * cb * ga + ca * cb * gb - ca * ca * gc) * inv_det2

    # diagonal clamp: gradient only flows where the floor was inactive
    d_ca = np.where(proj.cov2d_pre[:, 0] > COV2D_FLOOR, d_ca, 0.0)
    d_cc = np.where(proj.cov2d_pre[:, 2] > COV2D_FLOOR, d_cc, 0.0)

    # cov2d = J Sigma_c J^T; rows j0, j1
    j0 = proj.jac[:, 0, :]
    j1 = proj.jac[:, 1, :]
    sig = proj.cov_cam
    d_sig_c = (
        d_ca[:, None, None] * np.einsum("ni,nj->nij", j0, j0)
        + d_cb[:, None, None] * np.einsum("ni,nj->nij", j0, j1)
        + d_cc[:, None, None] * np.einsum("ni,nj->nij", j1, j1)
    )
    sig_sym = sig + sig.transpose(0, 2, 1)
    d_j0 = (
        d_ca[:, None] * np.einsum("nij,nj->ni", sig_sym, j0)
        + d_cb[:, None] * np.einsum("nij,nj->ni", sig, j1)
    )
    d_j1 = (
        d_cc[:, None] * np.einsum("nij,nj->ni", sig_sym, j1)
        + d_cb[:, None] * np.einsum("nji,nj->ni", sig, j0)
    )

    # Sigma_c = W Sigma_w W^T with W = R_c2w^T
    w = cam.rotation.T
    d_sig_w = np.einsum("ji,njk,kl->nil", w, d_sig_c, w)

    # Sigma_w = A A^T, A = R diag(s)
    rot_m = quat_to_matrix(rot_q)
    a = rot_m * s[:, None, :]
    d_a = np.einsum("nij,njk->nik", d_sig_w + d_sig_w.transpose(0, 2, 1), a)
    d_rot_m = d_a * s[:, None, :]
    d_s = np.einsum("nik,nik->nk", d_a, rot_m)
    d_log_scale = d_s * s
    d_quat = rotation_matrix_grad_to_quat(rot_q, d_rot_m)

    # mean2d -> p_cam
    du, dv = d_mean2d[:, 0], d_mean2d[:, 1]
    d_pc = np.zeros_like(proj.p_cam)
    d_pc[:, 0] = du * fx / d
    d_pc[:, 1] = -dv * fy / d
    d_pc[:, 2] = du * fx * x / d**2 - dv * fy * y / d**2

    # J entries depend on p_cam
    g_j00 = d_j0[:, 0]
    g_j02 = d_j0[:, 2]
    g_j11 = d_j1[:, 1]
    g_j12 = d_j1[:, 2]
    d_pc[:, 0] += g_j02 * fx / d**2
    d_pc[:, 1] += -g_j12 * fy / d**2
    d_depth_total = (
        d_depth
        - g_j00 * fx / d**2
        - g_j02 * 2 * fx * x / d**3
        + g_j11 * fy / d**2
        + g_j12 * 2 * fy * y / d**3
    )
    d_pc[:, 2] += -d_depth_total

    d_pos = d_pc @ cam.rotation.T
    return d_pos, d_quat, d_log_scale
