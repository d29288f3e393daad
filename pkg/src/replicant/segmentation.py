"""Contrastive per-gaussian features, click-to-instance queries, mask
rendering, and background carving.

Features live on the gaussians and are rasterized to per-pixel vectors;
training pulls rendered features together when two sampled pixels share a
2D mask label and pushes them apart otherwise, with extra terms for hard
pairs and a unit-norm regularizer on rendered features. Once trained, a
single click picks a query feature and instances fall out of a cosine
distance threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import Adam
from .render import RenderAdjoints, render, render_backward
from .scene import Scene

DEFAULT_TAU = 0.1


@dataclass
class ContrastiveConfig:
    uniform_samples: int = 4096  # per image
    mask_samples: int = 4096  # per mask
    margin: float = 0.3
    hard_threshold: float = 0.5
    hard_terms: str = "both"  # "both" | "positive" | "negative" | "none"
    lambda_opacity: float = 0.01
    lambda_scale: float = 0.01
    lambda_norm: float = 0.1
    iterations: int = 5000
    lr_feature: float = 0.02
    lr_opacity: float = 0.002
    lr_scale: float = 0.002
    max_pairs: int = 1 << 16
    train_geometry: bool = False
    sample_alpha_gate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.margin < 1:
            raise ValueError("margin must lie in (0, 1)")
        if self.hard_threshold < self.margin:
            raise ValueError("hard threshold must be >= margin")
        for w in (self.lambda_opacity, self.lambda_scale, self.lambda_norm):
            if w < 0:
                raise ValueError("loss weights must be >= 0")


@dataclass
class InstanceQuery:
    view_id: int
    u: int
    v: int
    tau: float = DEFAULT_TAU
    feature: np.ndarray | None = None  # unit query vector, filled on resolve


@dataclass
class MaskSet:
    """Per-view integer label images; 0 = background, q >= 1 = instance."""

    labels: dict[int, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, view_id: int) -> np.ndarray:
        return self.labels[view_id]

    def __contains__(self, view_id: int) -> bool:
        return view_id in self.labels

    def view_ids(self) -> list[int]:
        return sorted(self.labels)

    def validate_against(self, scene: Scene) -> None:
        for vid, img in self.labels.items():
            cam = scene.camera_by_id(vid)
            if img.shape != (cam.height, cam.width):
                raise ValueError(
                    f"mask for view {vid} is {img.shape}, camera is "
                    f"{(cam.height, cam.width)}"
                )


@dataclass
class InstanceSet:
    instances: list[np.ndarray]  # gaussian index arrays, pairwise disjoint
    groups: dict[str, list[int]] = field(default_factory=dict)
    masks: MaskSet | None = None

    def validate(self, n_total: int) -> None:
        seen: set[int] = set()
        for inst in self.instances:
            s = set(int(i) for i in inst)
            if s & seen:
                raise ValueError("instance index sets overlap")
            if s and max(s) >= n_total:
                raise ValueError("instance index out of range")
            seen |= s

    def all_indices(self) -> np.ndarray:
        if not self.instances:
            return np.zeros(0, dtype=int)
        return np.unique(np.concatenate([np.asarray(i, dtype=int) for i in self.instances]))


class ClickedEmptySpace(Exception):
    pass


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def regularized_loss_terms(
    scene: Scene, lambda_opacity: float = 0.01, lambda_scale: float = 0.01
) -> float:
    """Mean activated opacity and mean activated scale, weighted."""
    g = scene.gaussians
    return float(
        lambda_opacity * g.opacities.mean()
        + lambda_scale * g.scales.mean(axis=1).mean()
    )


def cosine_distance(fa: np.ndarray, fb: np.ndarray) -> float:
    na, nb = np.linalg.norm(fa), np.linalg.norm(fb)
    if na == 0 or nb == 0:
        raise ValueError("zero-norm feature (unrendered pixel?)")
    return float(1.0 - np.dot(fa, fb) / (na * nb))


def contrastive_pair_loss(
    fa: np.ndarray,
    fb: np.ndarray,
    same_mask: bool,
    neg_pos_ratio: float,
    margin: float = 0.3,
    hard_threshold: float = 0.5,
    hard_terms: str = "both",
) -> float:
    if neg_pos_ratio <= 0:
        raise ValueError("neg_pos_ratio must be positive")
    d = cosine_distance(fa, fb)
    if same_mask:
        loss = neg_pos_ratio * d
        if hard_terms in ("both", "positive") and d > hard_threshold:
            loss += neg_pos_ratio * (d - hard_threshold)
        return float(loss)
    loss = max(0.0, margin - d)
    if hard_terms in ("both", "negative"):
        loss += max(0.0, hard_threshold - d)
    return float(loss)


def _pair_losses_and_grads(
    feats: np.ndarray,
    ia: np.ndarray,
    ib: np.ndarray,
    same: np.ndarray,
    ratio: float,
    cfg: ContrastiveConfig,
) -> tuple[float, np.ndarray]:
    """Vectorized sum of pair losses over (ia, ib) plus d(loss)/d(feats)."""
    fa, fb = feats[ia], feats[ib]
    na = np.linalg.norm(fa, axis=1)
    nb = np.linalg.norm(fb, axis=1)
    dot = np.sum(fa * fb, axis=1)
    cos = dot / (na * nb)
    dist = 1.0 - cos

    # d(dist)/d(fa) = -(fb/(na*nb) - cos*fa/na^2); symmetric for fb
    d_coef = np.zeros(len(ia))
    loss = 0.0
    pos = same
    neg = ~same
    if pos.any():
        loss += ratio * dist[pos].sum()
        d_coef[pos] += ratio
        if cfg.hard_terms in ("both", "positive"):
            hard = pos & (dist > cfg.hard_threshold)
            loss += ratio * (dist[hard] - cfg.hard_threshold).sum()
            d_coef[hard] += ratio
    if neg.any():
        hinge = neg & (dist < cfg.margin)
        loss += (cfg.margin - dist[hinge]).sum()
        d_coef[hinge] -= 1.0
        if cfg.hard_terms in ("both", "negative"):
            hardn = neg & (dist < cfg.hard_threshold)
            loss += (cfg.hard_threshold - dist[hardn]).sum()
            d_coef[hardn] -= 1.0

    grad = np.zeros_like(feats)
    inv = 1.0 / (na * nb)
    ga = -(fb * inv[:, None] - fa * (cos / na**2)[:, None]) * d_coef[:, None]
    gb = -(fa * inv[:, None] - fb * (cos / nb**2)[:, None]) * d_coef[:, None]
    np.add.at(grad, ia, ga)
    np.add.at(grad, ib, gb)
    return float(loss), grad


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _sample_pixels(rng, labels: np.ndarray, cfg: ContrastiveConfig) -> np.ndarray:
    h, w = labels.shape
    flat = rng.integers(0, h * w, size=cfg.uniform_samples)
    picks = [flat]
    for lab in np.unique(labels):
        if lab == 0:
            continue
        where = np.flatnonzero(labels.ravel() == lab)
        if len(where):
            picks.append(rng.choice(where, size=cfg.mask_samples, replace=True))
    return np.concatenate(picks)


def train_features(
    scene: Scene,
    masks: MaskSet,
    cfg: ContrastiveConfig | None = None,
    callback=None,
) -> tuple[Scene, list[float]]:
    """Optimize per-gaussian features against the mask set.

    Returns the scene (a copy with trained features) and the per-iteration
    loss history. Geometry and appearance stay frozen unless
    cfg.train_geometry is set.
    """
    cfg = cfg or ContrastiveConfig()
    masks.validate_against(scene)
    view_ids = [v for v in scene.view_ids if v in masks]
    if not view_ids:
        raise ValueError("no training view has a mask")
    rng = np.random.default_rng(cfg.seed)
    out = scene.copy()
    g = out.gaussians
    if not np.any(g.features):
        f = rng.normal(size=g.features.shape)
        g.features = f / np.linalg.norm(f, axis=1, keepdims=True)

    params = {"feature": g.features}
    lrs = {"feature": cfg.lr_feature}
    if cfg.train_geometry:
        params.update(opacity_logit=g.opacity_logits, log_scale=g.log_scales)
        lrs.update(opacity_logit=cfg.lr_opacity, log_scale=cfg.lr_scale)
    opt = Adam(params, lrs)

    history: list[float] = []
    for it in range(cfg.iterations):
        vid = view_ids[int(rng.integers(len(view_ids)))]
        cam = scene.camera_by_id(vid)
        labels = masks[vid]
        render_out, ctx = render(out, cam, with_features=True, return_ctx=True)
        feat_img = render_out.feature
        alpha = render_out.alpha

        pix = _sample_pixels(rng, labels, cfg)
        ok = alpha.ravel()[pix] >= cfg.sample_alpha_gate
        pix = pix[ok]
        if len(pix) < 2:
            history.append(history[-1] if history else 0.0)
            continue
        feats = feat_img.reshape(-1, g.feature_dim)[pix]
        labs = labels.ravel()[pix]

        n_pairs = min(cfg.max_pairs, len(pix) * 4)
        ia = rng.integers(0, len(pix), size=n_pairs)
        ib = rng.integers(0, len(pix), size=n_pairs)
        keep = ia != ib
        ia, ib = ia[keep], ib[keep]
        same = labs[ia] == labs[ib]
        n_pos = max(int(same.sum()), 1)
        n_neg = max(int((~same).sum()), 1)
        ratio = n_neg / n_pos

        pair_loss, d_feats = _pair_losses_and_grads(feats, ia, ib, same, ratio, cfg)
        pair_loss /= len(ia)
        d_feats /= len(ia)

        # unit-norm regularizer on rendered features at the sampled pixels
        norms = np.linalg.norm(feats, axis=1)
        norm_loss = cfg.lambda_norm * float(((norms - 1) ** 2).mean())
        d_feats += (
            cfg.lambda_norm
            * 2.0
            * ((norms - 1) / np.maximum(norms, 1e-12) / len(pix))[:, None]
            * feats
        )

        adj_feat = np.zeros((cam.height, cam.width, g.feature_dim))
        np.add.at(adj_feat.reshape(-1, g.feature_dim), pix, d_feats)
        grads = render_backward(out, cam, RenderAdjoints(feature=adj_feat), ctx=ctx)

        loss = pair_loss + norm_loss
        grad_step = {"feature": grads.feature}
        if cfg.train_geometry:
            loss += regularized_loss_terms(out, cfg.lambda_opacity, cfg.lambda_scale)
            n = len(g)
            opac = g.opacities
            grad_step["opacity_logit"] = (
                grads.opacity_logit + cfg.lambda_opacity / n * opac * (1 - opac)
            )
            grad_step["log_scale"] = grads.log_scale + cfg.lambda_scale / (3 * n) * g.scales
        opt.step(grad_step)
        history.append(loss)
        if callback is not None:
            callback(it, loss)
    return out, history


# ---------------------------------------------------------------------------
# querying and masks
# ---------------------------------------------------------------------------


def query_feature_at(scene: Scene, query: InstanceQuery, alpha_gate: float = 0.1) -> np.ndarray:
    """Rendered feature at the clicked pixel, unit-normalized."""
    cam = scene.camera_by_id(query.view_id)
    if not (0 <= query.u < cam.width and 0 <= query.v < cam.height):
        raise ValueError(f"click ({query.u}, {query.v}) outside image")
    out = render(scene, cam, with_features=True)
    if out.alpha[query.v, query.u] < alpha_gate:
        raise ClickedEmptySpace("clicked empty space")
    f = out.feature[query.v, query.u]
    n = np.linalg.norm(f)
    if n == 0:
        raise ClickedEmptySpace("clicked empty space")
    return f / n


def query_instance(
    scene: Scene, query: InstanceQuery, alpha_gate: float = 0.1
) -> np.ndarray:
    """Indices of gaussians within cosine distance tau of the clicked feature."""
    if query.feature is None:
        query.feature = query_feature_at(scene, query, alpha_gate)
    return instance_from_feature(scene, query.feature, query.tau)


def instance_from_feature(scene: Scene, f_q: np.ndarray, tau: float) -> np.ndarray:
    feats = scene.gaussians.features
    norms = np.linalg.norm(feats, axis=1)
    f_q = np.asarray(f_q, dtype=np.float64)
    f_q = f_q / np.linalg.norm(f_q)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = feats @ f_q / norms
    dist = np.where(norms > 0, 1.0 - cos, 2.0)
    return np.flatnonzero(dist <= tau)


def render_instance_masks(
    scene: Scene,
    queries: list[InstanceQuery],
    alpha_gate: float = 0.5,
    view_ids: list[int] | None = None,
) -> MaskSet:
    """Label each pixel with the nearest query (1-based) within its tau.

    Ties at identical distance resolve to the lower query index; pixels
    with alpha below the gate stay background.
    """
    out = MaskSet()
    ids = view_ids if view_ids is not None else scene.view_ids
    for q in queries:
        if q.feature is None:
            q.feature = query_feature_at(scene, q)
    for vid in ids:
        cam = scene.camera_by_id(vid)
        r = render(scene, cam, with_features=True)
        labels = np.zeros((cam.height, cam.width), dtype=np.int32)
        if queries:
            f = r.feature
            norms = np.linalg.norm(f, axis=2)
            safe = np.maximum(norms, 1e-12)
            qmat = np.stack([q.feature for q in queries])  # (Q, D)
            cos = np.einsum("hwd,qd->hwq", f, qmat) / safe[:, :, None]
            dist = np.where(norms[:, :, None] > 0, 1.0 - cos, 2.0)
            best = np.argmin(dist, axis=2)
            best_d = np.take_along_axis(dist, best[:, :, None], axis=2)[:, :, 0]
            taus = np.array([q.tau for q in queries])[best]
            hit = (best_d <= taus) & (r.alpha >= alpha_gate)
            labels[hit] = best[hit].astype(np.int32) + 1
        out.labels[vid] = labels
    return out


# ---------------------------------------------------------------------------
# carving
# ---------------------------------------------------------------------------


@dataclass
class CarveResult:
    scene: Scene
    removed: np.ndarray  # original indices of removed gaussians
    index_map: np.ndarray  # old index -> new index, -1 where removed


def carve_background(
    scene: Scene, instance_masks: MaskSet, instances: InstanceSet
) -> CarveResult:
    """Drop background gaussians that are mask-covered, out of frame, or
    behind the camera in every training view. Instance members are kept."""
    g = scene.gaussians
    n = len(g)
    protected = np.zeros(n, dtype=bool)
    idx = instances.all_indices()
    if len(idx):
        protected[idx] = True

    removable = np.ones(n, dtype=bool)
    for vid in instance_masks.view_ids():
        cam = scene.camera_by_id(vid)
        labels = instance_masks[vid]
        uv, depth = cam.project(g.positions)
        behind = depth <= cam.near
        ui = np.floor(uv[:, 0]).astype(int)
        vi = np.floor(uv[:, 1]).astype(int)
        inside = (ui >= 0) & (ui < cam.width) & (vi >= 0) & (vi < cam.height) & ~behind
        covered = np.zeros(n, dtype=bool)
        ok = inside.nonzero()[0]
        covered[ok] = labels[vi[ok], ui[ok]] > 0
        outside = ~inside & ~behind
        cond = covered | outside | behind
        removable &= cond

    removed_mask = removable & ~protected
    removed = np.flatnonzero(removed_mask)
    keep = np.flatnonzero(~removed_mask)
    index_map = np.full(n, -1, dtype=int)
    index_map[keep] = np.arange(len(keep))
    carved = Scene(g.subset(keep), scene.cameras, scene.background.copy())
    return CarveResult(scene=carved, removed=removed, index_map=index_map)


def remap_instances(instances: InstanceSet, index_map: np.ndarray) -> InstanceSet:
    new_insts = []
    for inst in instances.instances:
        mapped = index_map[np.asarray(inst, dtype=int)]
        new_insts.append(mapped[mapped >= 0])
    return InstanceSet(instances=new_insts, groups=dict(instances.groups), masks=instances.masks)


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------


def mask_iou(pred: np.ndarray, gt: np.ndarray, label: int) -> float:
    p = pred == label
    g = gt == label
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def mean_class_accuracy(pred: MaskSet, gt: MaskSet) -> float:
    """Mean per-class pixel accuracy over classes present in the ground truth."""
    accs: dict[int, list[float]] = {}
    for vid in gt.view_ids():
        p, g = pred[vid], gt[vid]
        for lab in np.unique(g):
            sel = g == lab
            accs.setdefault(int(lab), []).append(float((p[sel] == lab).mean()))
    return float(np.mean([np.mean(v) for v in accs.values()]))
