"""Pure-numpy rasterization kernels (fallback backend).

Splats arrive sorted front to back; each is composited over its pixel
rect with running per-pixel transmittance. The compiled backend implements
the same loop in C; both must produce identical images, so any semantic
change here has to be mirrored there.
"""

from __future__ import annotations

import numpy as np

ALPHA_MIN = 1e-9  # matches the coverage-rect alpha floor in projection
ALPHA_MAX = 0.999
T_EPS = 1e-4


def rasterize_forward(
    mean2d: np.ndarray,
    conic: np.ndarray,
    opacity: np.ndarray,
    values: np.ndarray,
    rect: np.ndarray,
    background: np.ndarray,
    height: int,
    width: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Composite sorted splats. Returns (out (H,W,C), T_final (H,W), lastk (H,W)).

    ``lastk`` holds 1 + the sorted index of the last contributing splat per
    pixel (0 where none contributed).
    """
    dtype = values.dtype
    n, c = values.shape
    out = np.zeros((height, width, c), dtype=dtype)
    t_cur = np.ones((height, width), dtype=dtype)
    lastk = np.zeros((height, width), dtype=np.int32)

    for k in range(n):
        x0, x1, y0, y1 = rect[k]
        if x0 >= x1 or y0 >= y1:
            continue
        px = np.arange(x0, x1, dtype=dtype)
        py = np.arange(y0, y1, dtype=dtype)
        dx = px[None, :] - mean2d[k, 0]
        dy = py[:, None] - mean2d[k, 1]
        a, b, cc = conic[k]
        power = -0.5 * (a * dx * dx + cc * dy * dy) - b * dx * dy
        alpha = opacity[k] * np.exp(power)
        np.minimum(alpha, dtype.type(ALPHA_MAX), out=alpha)
        t_patch = t_cur[y0:y1, x0:x1]
        contrib = (power <= 0) & (alpha >= ALPHA_MIN) & (t_patch >= T_EPS)
        if not contrib.any():
            continue
        w = np.where(contrib, alpha * t_patch, dtype.type(0))
        out[y0:y1, x0:x1] += w[:, :, None] * values[k]
        t_cur[y0:y1, x0:x1] = np.where(contrib, t_patch * (1 - alpha), t_patch)
        lk = lastk[y0:y1, x0:x1]
        lastk[y0:y1, x0:x1] = np.where(contrib, np.int32(k + 1), lk)

    out += t_cur[:, :, None] * background.astype(dtype)
    return out, t_cur, lastk


def rasterize_backward(
    mean2d: np.ndarray,
    conic: np.ndarray,
    opacity: np.ndarray,
    values: np.ndarray,
    rect: np.ndarray,
    background: np.ndarray,
    t_final: np.ndarray,
    lastk: np.ndarray,
    grad_out: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Reverse-mode of rasterize_forward.

    Returns (d_values (N,C), d_opacity (N,), d_mean2d (N,2), d_conic (N,3)).
    """
    dtype = values.dtype
    n, c = values.shape
    d_values = np.zeros_like(values)
    d_opacity = np.zeros_like(opacity)
    d_mean2d = np.zeros_like(mean2d)
    d_conic = np.zeros_like(conic)

    t_run = t_final.copy()
    tail = t_final[:, :, None] * background.astype(dtype)

    for k in range(n - 1, -1, -1):
        x0, x1, y0, y1 = rect[k]
        if x0 >= x1 or y0 >= y1:
            continue
        px = np.arange(x0, x1, dtype=dtype)
        py = np.arange(y0, y1, dtype=dtype)
        dx = px[None, :] - mean2d[k, 0]
        dy = py[:, None] - mean2d[k, 1]
        a, b, cc = conic[k]
        power = -0.5 * (a * dx * dx + cc * dy * dy) - b * dx * dy
        g = np.exp(power)
        alpha_raw = opacity[k] * g
        alpha = np.minimum(alpha_raw, dtype.type(ALPHA_MAX))
        contrib = (power <= 0) & (alpha >= ALPHA_MIN) & (lastk[y0:y1, x0:x1] >= k + 1)
        if not contrib.any():
            continue
        t_next = t_run[y0:y1, x0:x1]
        one_minus = 1 - alpha
        t_k = np.where(contrib, t_next / one_minus, t_next)
        w = np.where(contrib, alpha * t_k, dtype.type(0))
        go = grad_out[y0:y1, x0:x1]

        d_values[k] = np.einsum("yx,yxc->c", w, go)

        tail_patch = tail[y0:y1, x0:x1]
        d_alpha = np.einsum(
            "yxc,yxc->yx", go, values[k][None, None, :] * t_k[:, :, None] - tail_patch / one_minus[:, :, None]
        )
        d_alpha = np.where(contrib & (alpha_raw < ALPHA_MAX), d_alpha, dtype.type(0))

        d_opacity[k] = np.sum(d_alpha * g)
        d_power = d_alpha * alpha_raw  # d_g * g, with d_g = opacity * d_alpha
        d_conic[k, 0] = np.sum(-0.5 * dx * dx * d_power)
        d_conic[k, 1] = np.sum(-dx * dy * d_power)
        d_conic[k, 2] = np.sum(-0.5 * dy * dy * d_power)
        d_mean2d[k, 0] = np.sum((a * dx + b * dy) * d_power)
        d_mean2d[k, 1] = np.sum((b * dx + cc * dy) * d_power)

        tail[y0:y1, x0:x1] = tail_patch + w[:, :, None] * values[k]
        t_run[y0:y1, x0:x1] = t_k

    return d_values, d_opacity, d_mean2d, d_conic
