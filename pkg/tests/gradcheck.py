"""Finite-difference gradient checking against the renderer backward pass."""

from __future__ import annotations

import numpy as np

from replicant.render import RenderAdjoints, render, render_backward

PARAM_GROUPS = ("position", "rotation", "log_scale", "opacity_logit", "sh", "feature")

_ARRAYS = {
    "position": lambda g: g.positions,
    "rotation": lambda g: g.rotations,
    "log_scale": lambda g: g.log_scales,
    "opacity_logit": lambda g: g.opacity_logits,
    "sh": lambda g: g.sh,
    "feature": lambda g: g.features,
}


def loss_and_grads(scene, cam, adj: RenderAdjoints, dtype=np.float64):
    out, ctx = render(scene, cam, with_features=True, dtype=dtype, return_ctx=True)
    loss = (
        float(np.sum(out.color * adj.color))
        + float(np.sum(out.alpha * adj.alpha))
        + float(np.sum(out.depth * adj.depth))
        + float(np.sum(out.feature * adj.feature))
    )
    grads = render_backward(scene, cam, adj, ctx=ctx)
    return loss, grads


def _loss_only(scene, cam, adj, dtype):
    out = render(scene, cam, with_features=True, dtype=dtype)
    return (
        float(np.sum(out.color * adj.color))
        + float(np.sum(out.alpha * adj.alpha))
        + float(np.sum(out.depth * adj.depth))
        + float(np.sum(out.feature * adj.feature))
    )


def random_adjoints(rng, cam, feature_dim):
    h, w = cam.height, cam.width
    return RenderAdjoints(
        color=rng.normal(size=(h, w, 3)),
        alpha=rng.normal(size=(h, w)),
        depth=rng.normal(size=(h, w)) * 0.1,
        feature=rng.normal(size=(h, w, feature_dim)),
    )


def fd_relative_errors(
    scene,
    cam,
    adj: RenderAdjoints,
    groups=PARAM_GROUPS,
    max_per_group: int | None = None,
    h_rel: float = 1e-4,
    dtype=np.float64,
    rng: np.random.Generator | None = None,
) -> dict[str, np.ndarray]:
    """Central-difference check of every (or a sampled subset of) parameter.

    Returns per-group arrays of relative errors |fd - analytic| /
    max(|fd|, |analytic|, 1e-3).
    """
    rng = rng or np.random.default_rng(0)
    _, grads = loss_and_grads(scene, cam, adj, dtype=dtype)
    out: dict[str, np.ndarray] = {}
    for group in groups:
        arr = _ARRAYS[group](scene.gaussians)
        garr = getattr(grads, group if group != "opacity_logit" else "opacity_logit")
        flat = arr.reshape(-1)
        gflat = np.asarray(garr).reshape(-1)
        idxs = np.arange(len(flat))
        if max_per_group is not None and len(idxs) > max_per_group:
            idxs = rng.choice(len(flat), size=max_per_group, replace=False)
        errs = np.empty(len(idxs))
        for j, i in enumerate(idxs):
            orig = flat[i]
            h = h_rel * max(abs(orig), 1.0)
            flat[i] = orig + h
            lp = _loss_only(scene, cam, adj, dtype)
            flat[i] = orig - h
            lm = _loss_only(scene, cam, adj, dtype)
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            an = gflat[i]
            errs[j] = abs(fd - an) / max(abs(fd), abs(an), 1e-3)
        out[group] = errs
    return out
