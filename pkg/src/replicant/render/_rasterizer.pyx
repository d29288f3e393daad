# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rasterization kernels; semantics mirror numpy_backend exactly."""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef fused floating:
    float
    double

DEF ALPHA_MIN = 1e-9
DEF ALPHA_MAX = 0.999
DEF T_EPS = 1e-4


def rasterize_forward(
    floating[:, ::1] mean2d,
    floating[:, ::1] conic,
    floating[::1] opacity,
    floating[:, ::1] values,
    int[:, ::1] rect,
    floating[::1] background,
    int height,
    int width,
):
    dtype = np.float32 if floating is float else np.float64
    cdef int n = values.shape[0]
    cdef int c = values.shape[1]
    out_arr = np.zeros((height, width, c), dtype=dtype)
    t_arr = np.ones((height, width), dtype=dtype)
    lastk_arr = np.zeros((height, width), dtype=np.int32)
    cdef floating[:, :, ::1] out = out_arr
    cdef floating[:, ::1] t_cur = t_arr
    cdef int[:, ::1] lastk = lastk_arr

    cdef int k, px, py, ch, x0, x1, y0, y1
    cdef floating a, b, cc, mu, mv, op, dx, dy, power, alpha, t, w
    for k in range(n):
        x0 = rect[k, 0]; x1 = rect[k, 1]; y0 = rect[k, 2]; y1 = rect[k, 3]
        a = conic[k, 0]; b = conic[k, 1]; cc = conic[k, 2]
        mu = mean2d[k, 0]; mv = mean2d[k, 1]
        op = opacity[k]
        for py in range(y0, y1):
            dy = <floating>py - mv
            for px in range(x0, x1):
                t = t_cur[py, px]
                if t < T_EPS:
                    continue
                dx = <floating>px - mu
                power = -0.5 * (a * dx * dx + cc * dy * dy) - b * dx * dy
                if power > 0:
                    continue
                alpha = op * exp(power)
                if alpha > ALPHA_MAX:
                    alpha = ALPHA_MAX
                if alpha < ALPHA_MIN:
                    continue
                w = alpha * t
                for ch in range(c):
                    out[py, px, ch] += w * values[k, ch]
                t_cur[py, px] = t * (1 - alpha)
                lastk[py, px] = k + 1

    cdef int i, j
    for i in range(height):
        for j in range(width):
            t = t_cur[i, j]
            for ch in range(c):
                out[i, j, ch] += t * background[ch]
    return out_arr, t_arr, lastk_arr


def rasterize_backward(
    floating[:, ::1] mean2d,
    floating[:, ::1] conic,
    floating[::1] opacity,
    floating[:, ::1] values,
    int[:, ::1] rect,
    floating[::1] background,
    floating[:, ::1] t_final,
    int[:, ::1] lastk,
    floating[:, :, ::1] grad_out,
):
    dtype = np.float32 if floating is float else np.float64
    cdef int n = values.shape[0]
    cdef int c = values.shape[1]
    cdef int height = t_final.shape[0]
    cdef int width = t_final.shape[1]

    d_values_arr = np.zeros((n, c), dtype=dtype)
    d_opacity_arr = np.zeros(n, dtype=dtype)
    d_mean2d_arr = np.zeros((n, 2), dtype=dtype)
    d_conic_arr = np.zeros((n, 3), dtype=dtype)
    t_run_arr = np.asarray(t_final).copy()
    tail_arr = np.asarray(t_final)[:, :, None] * np.asarray(background)
    tail_arr = np.ascontiguousarray(tail_arr, dtype=dtype)
    cdef floating[:, ::1] d_values = d_values_arr
    cdef floating[::1] d_opacity = d_opacity_arr
    cdef floating[:, ::1] d_mean2d = d_mean2d_arr
    cdef floating[:, ::1] d_conic = d_conic_arr
    cdef floating[:, ::1] t_run = t_run_arr
    cdef floating[:, :, ::1] tail = tail_arr

    cdef int k, px, py, ch, x0, x1, y0, y1
    cdef floating a, b, cc, mu, mv, op, dx, dy, power, g, alpha_raw, alpha
    cdef floating t_next, one_minus, t_k, w, d_alpha, d_power, go
    for k in range(n - 1, -1, -1):
        x0 = rect[k, 0]; x1 = rect[k, 1]; y0 = rect[k, 2]; y1 = rect[k, 3]
        a = conic[k, 0]; b = conic[k, 1]; cc = conic[k, 2]
        mu = mean2d[k, 0]; mv = mean2d[k, 1]
        op = opacity[k]
        for py in range(y0, y1):
            dy = <floating>py - mv
            for px in range(x0, x1):
                if lastk[py, px] < k + 1:
                    continue
                dx = <floating>px - mu
                power = -0.5 * (a * dx * dx + cc * dy * dy) - b * dx * dy
                if power > 0:
                    continue
                g = exp(power)
                alpha_raw = op * g
                alpha = alpha_raw
                if alpha > ALPHA_MAX:
                    alpha = ALPHA_MAX
                if alpha < ALPHA_MIN:
                    continue
                t_next = t_run[py, px]
                one_minus = 1 - alpha
                t_k = t_next / one_minus
                w = alpha * t_k

                d_alpha = 0
                for ch in range(c):
                    go = grad_out[py, px, ch]
                    d_values[k, ch] += w * go
                    d_alpha += go * (values[k, ch] * t_k - tail[py, px, ch] / one_minus)
                    tail[py, px, ch] += w * values[k, ch]
                t_run[py, px] = t_k

                if alpha_raw < ALPHA_MAX:
                    d_opacity[k] += d_alpha * g
                    d_power = d_alpha * alpha_raw
                    d_conic[k, 0] += -0.5 * dx * dx * d_power
                    d_conic[k, 1] += -dx * dy * d_power
                    d_conic[k, 2] += -0.5 * dy * dy * d_power
                    d_mean2d[k, 0] += (a * dx + b * dy) * d_power
                    d_mean2d[k, 1] += (b * dx + cc * dy) * d_power

    return d_values_arr, d_opacity_arr, d_mean2d_arr, d_conic_arr
