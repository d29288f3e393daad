"""Real spherical harmonics for view-dependent splat color.

Basis ordering and constants follow the standard splat-file convention:
degree 0, then degree 1 as (-y, z, -x) scaled terms, etc. Coefficients are
RGB triples per (degree, order); evaluation is a plain linear combination
with no offset and no clamping.
"""

from __future__ import annotations

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

DEFAULT_DEGREE = 3


def num_coeffs(degree: int = DEFAULT_DEGREE) -> int:
    return (degree + 1) ** 2


def sh_basis(dirs: np.ndarray, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Basis values at unit directions; dirs (..., 3) -> (..., (degree+1)^2)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = np.empty(dirs.shape[:-1] + (num_coeffs(degree),), dtype=np.float64)
    out[..., 0] = SH_C0
    if degree >= 1:
        out[..., 1] = -SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 4] = SH_C2[0] * x * y
        out[..., 5] = SH_C2[1] * y * z
        out[..., 6] = SH_C2[2] * (2 * zz - xx - yy)
        out[..., 7] = SH_C2[3] * x * z
        out[..., 8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        out[..., 9] = SH_C3[0] * y * (3 * xx - yy)
        out[..., 10] = SH_C3[1] * x * y * z
        out[..., 11] = SH_C3[2] * y * (4 * zz - xx - yy)
        out[..., 12] = SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        out[..., 13] = SH_C3[4] * x * (4 * zz - xx - yy)
        out[..., 14] = SH_C3[5] * z * (xx - yy)
        out[..., 15] = SH_C3[6] * x * (xx - 3 * yy)
    return out


def sh_basis_grad(dirs: np.ndarray, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """d(basis)/d(direction); dirs (..., 3) -> (..., (degree+1)^2, 3).

    Gradient of the raw polynomials; the derivative of any upstream
    normalization of ``dirs`` is the caller's business.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    zero = np.zeros_like(x)
    g = np.zeros(dirs.shape[:-1] + (num_coeffs(degree), 3), dtype=np.float64)
    if degree >= 1:
        g[..., 1, 1] = -SH_C1
        g[..., 2, 2] = SH_C1
        g[..., 3, 0] = -SH_C1
    if degree >= 2:
        g[..., 4, 0] = SH_C2[0] * y
        g[..., 4, 1] = SH_C2[0] * x
        g[..., 5, 1] = SH_C2[1] * z
        g[..., 5, 2] = SH_C2[1] * y
        g[..., 6, 0] = SH_C2[2] * (-2 * x)
        g[..., 6, 1] = SH_C2[2] * (-2 * y)
        g[..., 6, 2] = SH_C2[2] * (4 * z)
        g[..., 7, 0] = SH_C2[3] * z
        g[..., 7, 2] = SH_C2[3] * x
        g[..., 8, 0] = SH_C2[4] * (2 * x)
        g[..., 8, 1] = SH_C2[4] * (-2 * y)
    if degree >= 3:
        g[..., 9, 0] = SH_C3[0] * (6 * x * y)
        g[..., 9, 1] = SH_C3[0] * (3 * x * x - 3 * y * y)
        g[..., 9, 2] = zero
        g[..., 10, 0] = SH_C3[1] * y * z
        g[..., 10, 1] = SH_C3[1] * x * z
        g[..., 10, 2] = SH_C3[1] * x * y
        g[..., 11, 0] = SH_C3[2] * (-2 * x * y)
        g[..., 11, 1] = SH_C3[2] * (4 * z * z - x * x - 3 * y * y)
        g[..., 11, 2] = SH_C3[2] * (8 * y * z)
        g[..., 12, 0] = SH_C3[3] * (-6 * x * z)
        g[..., 12, 1] = SH_C3[3] * (-6 * y * z)
        g[..., 12, 2] = SH_C3[3] * (6 * z * z - 3 * x * x - 3 * y * y)
        g[..., 13, 0] = SH_C3[4] * (4 * z * z - 3 * x * x - y * y)
        g[..., 13, 1] = SH_C3[4] * (-2 * x * y)
        g[..., 13, 2] = SH_C3[4] * (8 * x * z)
        g[..., 14, 0] = SH_C3[5] * (2 * x * z)
        g[..., 14, 1] = SH_C3[5] * (-2 * y * z)
        g[..., 14, 2] = SH_C3[5] * (x * x - y * y)
        g[..., 15, 0] = SH_C3[6] * (3 * x * x - 3 * y * y)
        g[..., 15, 1] = SH_C3[6] * (-6 * x * y)
        g[..., 15, 2] = zero
    return g


def eval_sh(coeffs: np.ndarray, dirs: np.ndarray, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Evaluate RGB color: coeffs (..., K, 3) at unit dirs (..., 3) -> (..., 3)."""
    basis = sh_basis(dirs, degree)
    return np.einsum("...k,...kc->...c", basis, np.asarray(coeffs, dtype=np.float64))


def dc_from_rgb(rgb: np.ndarray) -> np.ndarray:
    """Degree-0 coefficient that evaluates to the given flat color."""
    return np.asarray(rgb, dtype=np.float64) / SH_C0
