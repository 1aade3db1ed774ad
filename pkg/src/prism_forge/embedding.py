"""Distortion-aware embeddings: encoder, losses, and training loops.

The encoder maps an image to a unit-norm D-vector: a fixed bank of
degradation-sensitive statistics (downsampled pixels, high-frequency energy,
histograms, directional gradients, resampling residuals) feeding a trainable
two-hidden-layer MLP.  Training pulls each degraded variant toward its clean
image while repelling sibling variants in proportion to the dissimilarity of
their distortion label sets, so mixtures settle near their constituent
primitives in embedding space.

A probe head trained jointly supplies the clean-image quality regularizer;
the deployment classifier is trained afterwards on the frozen encoder.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import autodiff as ad
from .distortions import CATEGORIES, labels_to_multihot, multihot_to_labels
from .imaging import as_image, luma, resize_to
from .prompts import render_prompt
from .rng import DEFAULT_SEED, child_rng

__all__ = [
    "FEATURE_DIM",
    "image_features",
    "EncoderParams",
    "MlpHead",
    "TrainConfig",
    "init_encoder",
    "encode",
    "encode_features",
    "jaccard_weight",
    "label_similarity",
    "pair_weight",
    "contrastive_loss",
    "quality_loss",
    "total_loss",
    "train_encoder",
    "train_classifier",
    "predict_labels",
    "to_auto_prompt",
    "finite_diff_check",
    "write_training_log",
]

WEIGHTING_SCHEMES = ("jaccard", "cosine_labels", "overlap", "unweighted", "none")


# ---------------------------------------------------------------------------
# Fixed feature bank
# ---------------------------------------------------------------------------

def _to_rgb(img: np.ndarray) -> np.ndarray:
    img = as_image(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def _band_means(plane: np.ndarray, bands: int, axis: int) -> np.ndarray:
    idx = np.linspace(0, plane.shape[axis], bands + 1).astype(int)
    return np.array([
        plane.take(range(idx[i], max(idx[i] + 1, idx[i + 1])), axis=axis).mean()
        for i in range(bands)
    ])


def _block_grid_errors(g: np.ndarray, scales=(2.0, 2.5, 3.0, 3.5, 4.0)) -> np.ndarray:
    """Reconstruction error of nearest-replicated block grids (pixelation cue)."""
    from .imaging import upsample_nearest

    h, w = g.shape
    errs = []
    for s in scales:
        dh = max(1, int(round(h / s)))
        dw = max(1, int(round(w / s)))
        iy = np.minimum(((np.arange(dh) + 0.5) * h / dh).astype(np.intp), h - 1)
        ix = np.minimum(((np.arange(dw) + 0.5) * w / dw).astype(np.intp), w - 1)
        small = g[np.ix_(iy, ix)]
        errs.append(np.abs(upsample_nearest(small, h, w) - g).mean())
    return np.asarray(errs) * 20.0


def image_features(image: np.ndarray) -> np.ndarray:
    """Fixed degradation-sensitive statistics; the encoder's input layer."""
    img = _to_rgb(image)
    g = luma(img)
    feats: list[np.ndarray] = []

    feats.append(resize_to(img, 8, 8).ravel())  # 192: coarse color layout

    blur = ndimage.gaussian_filter(g, sigma=1.0, mode="reflect")
    resid = np.abs(g - blur)
    feats.append(resize_to(resid * 4.0, 4, 4).ravel())  # 16
    feats.append(np.array([resid.mean() * 10.0, resid.std() * 10.0]))

    # directional detail (motion blur suppresses its own axis)
    feats.append(
        np.array(
            [
                np.abs(np.diff(g, axis=1)).mean(),
                np.abs(np.diff(g, axis=0)).mean(),
                np.abs(g[1:, 1:] - g[:-1, :-1]).mean(),
                np.abs(g[1:, :-1] - g[:-1, 1:]).mean(),
            ]
        )
        * 10.0
    )

    hist, _ = np.histogram(g, bins=16, range=(0.0, 1.0))
    feats.append(hist / g.size)  # 16

    means = img.mean(axis=(0, 1))
    stds = img.std(axis=(0, 1))
    sat = img.max(axis=2) - img.min(axis=2)
    feats.append(means)  # 3
    feats.append(stds)  # 3
    feats.append(np.array([means[0] - means[1], means[1] - means[2], means[0] - means[2]]))
    feats.append(np.array([sat.mean(), sat.std()]))
    feats.append(np.quantile(sat, [0.25, 0.75, 0.95]))
    feats.append(img.min(axis=(0, 1)))  # 3: per-channel floor (casts raise it)
    feats.append(img.max(axis=(0, 1)))  # 3

    # photometric envelope: clean scenes span luma 0.10..0.90 by construction
    feats.append(np.quantile(g, [0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95]))

    feats.append(_band_means(g, 8, axis=0))  # 8 row bands (haze profile)
    feats.append(_band_means(g, 8, axis=1))  # 8 col bands
    dark = img.min(axis=2)
    row_dark = _band_means(dark, 4, axis=0)
    feats.append(row_dark)  # 4: dark-channel profile (haze whitens far rows)

    # noise estimate (median absolute Laplacian deviation) and impulse share
    lap = ndimage.laplace(g, mode="reflect")
    sigma_hat = np.median(np.abs(lap - np.median(lap))) / 0.6745 / np.sqrt(20.0)
    impulse = np.mean((g < 0.02) | (g > 0.98))
    feats.append(np.array([sigma_hat * 40.0, impulse * 10.0]))

    # blur scale response: detail energy surviving successive smoothing
    d0 = np.abs(np.diff(g, axis=1)).mean() + np.abs(np.diff(g, axis=0)).mean()
    g2 = ndimage.gaussian_filter(g, sigma=2.0, mode="reflect")
    d2 = np.abs(np.diff(g2, axis=1)).mean() + np.abs(np.diff(g2, axis=0)).mean()
    feats.append(np.array([d0 * 10.0, d2 * 10.0, d2 / (d0 + 1e-6)]))

    feats.append(_block_grid_errors(g))  # 5: pixelation grid fit

    feats.append(np.array([np.abs(lap).mean() * 10.0, g.std(), g.mean()]))

    return np.concatenate(feats)


FEATURE_DIM = int(image_features(np.zeros((16, 16, 3))).shape[0])


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass
class EncoderParams:
    """Feature standardization plus a 2-hidden-layer MLP onto the unit sphere."""

    feat_mean: np.ndarray
    feat_std: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @property
    def embed_dim(self) -> int:
        return self.W3.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in ("feat_mean", "feat_std", "W1", "b1", "W2", "b2", "W3", "b3")}


@dataclass
class MlpHead:
    """Two-layer MLP with logistic outputs (probe and classifier heads)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def out_dim(self) -> int:
        return self.W2.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in ("W1", "b1", "W2", "b2")}

    def probabilities(self, embedding: np.ndarray) -> np.ndarray:
        e = np.atleast_2d(np.asarray(embedding, dtype=np.float64))
        h = np.tanh(e @ self.W1 + self.b1)
        z = h @ self.W2 + self.b2
        p = 1.0 / (1.0 + np.exp(-z))
        return p[0] if np.asarray(embedding).ndim == 1 else p


@dataclass
class TrainConfig:
    tau: float = 0.10
    batch_cleans: int = 32
    variants_per_clean: int = 4
    learning_rate: float = 0.5
    epochs: int = 60
    optimizer: str = "gd"  # gd | adam
    weighting_scheme: str = "jaccard"
    seed: int = DEFAULT_SEED
    embed_dim: int = 64
    hidden_dim: int = 128
    probe_hidden: int = 64
    classifier_hidden: int = 512
    classifier_epochs: int = 400
    classifier_lr: float = 1.0

    def validate(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.batch_cleans < 2:
            raise ValueError("need at least 2 clean images per batch")
        if self.variants_per_clean < 1:
            raise ValueError("variants_per_clean must be >= 1")
        if self.weighting_scheme not in WEIGHTING_SCHEMES:
            raise ValueError(f"unknown weighting scheme {self.weighting_scheme!r}")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))


def init_encoder(config: TrainConfig, rng: np.random.Generator, feature_dim: int = FEATURE_DIM) -> EncoderParams:
    h, d = config.hidden_dim, config.embed_dim
    return EncoderParams(
        feat_mean=np.zeros(feature_dim),
        feat_std=np.ones(feature_dim),
        W1=_glorot(rng, feature_dim, h),
        b1=np.zeros(h),
        W2=_glorot(rng, h, h),
        b2=np.zeros(h),
        W3=_glorot(rng, h, d),
        b3=np.zeros(d),
    )


def init_head(in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator) -> MlpHead:
    return MlpHead(
        W1=_glorot(rng, in_dim, hidden),
        b1=np.zeros(hidden),
        W2=_glorot(rng, hidden, out_dim),
        b2=np.zeros(out_dim),
    )


# ---------------------------------------------------------------------------
# Forward paths
# ---------------------------------------------------------------------------

def _standardize(feats: np.ndarray, params: EncoderParams) -> np.ndarray:
    return (feats - params.feat_mean) / params.feat_std


def encode_features(params: EncoderParams, feats: np.ndarray) -> np.ndarray:
    """Unit-norm embeddings for pre-extracted feature rows."""
    x = _standardize(np.atleast_2d(np.asarray(feats, dtype=np.float64)), params)
    h = np.tanh(x @ params.W1 + params.b1)
    h = np.tanh(h @ params.W2 + params.b2)
    e = h @ params.W3 + params.b3
    e = e / np.sqrt((e * e).sum(axis=1, keepdims=True) + 1e-12)
    return e[0] if np.asarray(feats).ndim == 1 else e


def encode(params: EncoderParams, image: np.ndarray) -> np.ndarray:
    """Image -> unit-norm embedding (deterministic given params)."""
    return encode_features(params, image_features(image))


def _encode_tape(params_t: dict[str, ad.Tensor], x_std: np.ndarray) -> ad.Tensor:
    x = ad.constant(x_std)
    h = ad.tanh(ad.matmul(x, params_t["W1"]) + ad.reshape(params_t["b1"], (1, -1)))
    h = ad.tanh(ad.matmul(h, params_t["W2"]) + ad.reshape(params_t["b2"], (1, -1)))
    e = ad.matmul(h, params_t["W3"]) + ad.reshape(params_t["b3"], (1, -1))
    return ad.l2_normalize(e, axis=1)


def _head_tape(params_t: dict[str, ad.Tensor], e: ad.Tensor) -> ad.Tensor:
    h = ad.tanh(ad.matmul(e, params_t["W1"]) + ad.reshape(params_t["b1"], (1, -1)))
    z = ad.matmul(h, params_t["W2"]) + ad.reshape(params_t["b2"], (1, -1))
    return ad.sigmoid(z)


# ---------------------------------------------------------------------------
# Label-set similarity weighting
# ---------------------------------------------------------------------------

def jaccard_weight(d_j, d_k) -> float:
    """exp(1 - |intersection| / |union|): 1 for identical sets, e for disjoint."""
    a, b = frozenset(d_j), frozenset(d_k)
    if not a and not b:
        raise ValueError("jaccard weight undefined for two empty sets")
    jac = len(a & b) / len(a | b)
    return float(np.exp(1.0 - jac))


def label_similarity(scheme: str, d_j, d_k) -> float:
    """Similarity in [0, 1] between two label sets under a named scheme."""
    a, b = frozenset(d_j), frozenset(d_k)
    if scheme == "jaccard":
        if not a and not b:
            raise ValueError("jaccard similarity undefined for two empty sets")
        return len(a & b) / len(a | b)
    if scheme == "cosine_labels":
        if not a or not b:
            return 0.0
        return len(a & b) / math.sqrt(len(a) * len(b))
    if scheme == "overlap":
        if not a or not b:
            raise ValueError("overlap coefficient undefined for an empty set")
        return len(a & b) / min(len(a), len(b))
    if scheme == "unweighted":
        return 1.0 if a == b else 0.0
    raise ValueError(f"no label similarity for scheme {scheme!r}")


def pair_weight(scheme: str, d_j, d_k) -> float:
    """Contrastive sibling weight: exp(1 - similarity); 1.0 for scheme=none."""
    if scheme == "none":
        return 1.0
    return float(np.exp(1.0 - label_similarity(scheme, d_j, d_k)))


def pair_weight_matrix(scheme: str, multihot: np.ndarray) -> np.ndarray:
    """Pairwise exp(1 - similarity) over rows of a multi-hot label matrix."""
    if scheme == "none":
        return np.ones((len(multihot), len(multihot)))
    inter = multihot @ multihot.T
    sizes = multihot.sum(axis=1)
    if scheme == "jaccard":
        union = sizes[:, None] + sizes[None, :] - inter
        sim = inter / union
    elif scheme == "cosine_labels":
        sim = inter / np.sqrt(np.outer(sizes, sizes))
    elif scheme == "overlap":
        sim = inter / np.minimum(sizes[:, None], sizes[None, :])
    elif scheme == "unweighted":
        sim = (inter == sizes[:, None]) & (inter == sizes[None, :])
        sim = sim.astype(float)
    else:
        raise ValueError(f"unknown weighting scheme {scheme!r}")
    return np.exp(1.0 - sim)


# ---------------------------------------------------------------------------
# Losses (single-group functional forms with exact gradients)
# ---------------------------------------------------------------------------

def _cosine_rows(a: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    an = ad.l2_normalize(a, axis=1)
    bn = ad.l2_normalize(b, axis=1)
    return ad.matmul(an, bn.T)


def contrastive_loss(e_clean, variants, others, tau: float, scheme: str = "jaccard"):
    """Weighted contrastive loss for one clean image and its degraded variants.

    ``variants`` is a list of (embedding, label-set) pairs; ``others`` a list
    of embeddings of variants belonging to different clean images.  Similarity
    is cosine.  The positive aligns each variant with the clean embedding; the
    denominator repels sibling variants (scaled by exp(1 - label similarity))
    and all "other" embeddings.  Scheme "none" is unweighted InfoNCE with the
    positive included in the denominator.

    Returns (loss, grads) with grads for "clean" (D,), "variants" (m, D) and
    "others" (n, D); gradients are exact.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not variants:
        raise ValueError("need at least one degraded variant")
    if scheme not in WEIGHTING_SCHEMES:
        raise ValueError(f"unknown weighting scheme {scheme!r}")
    if scheme != "none" and len(variants) == 1 and not others:
        raise ValueError("denominator is empty: a single variant needs at least one other embedding")
    m = len(variants)
    v_arr = np.stack([np.asarray(v, dtype=np.float64) for v, _ in variants])
    labels = [frozenset(d) for _, d in variants]
    o_arr = (
        np.stack([np.asarray(o, dtype=np.float64) for o in others])
        if others
        else np.zeros((0, v_arr.shape[1]))
    )

    clean_t = ad.parameter(np.asarray(e_clean, dtype=np.float64).reshape(1, -1))
    var_t = ad.parameter(v_arr)
    oth_t = ad.parameter(o_arr) if len(o_arr) else None

    weights = np.array([[pair_weight(scheme, labels[j], labels[k]) for k in range(m)] for j in range(m)])
    np.fill_diagonal(weights, 0.0)  # k != j

    pos = _cosine_rows(var_t, clean_t)  # (m, 1)
    pos_sc = pos * (1.0 / tau)
    sib = _cosine_rows(var_t, var_t) * (1.0 / tau)  # (m, m)
    terms = [ad.mul(ad.exp(sib), ad.constant(weights)).sum(axis=1, keepdims=True)]
    if scheme == "none":
        terms.append(ad.exp(pos_sc))
    if oth_t is not None:
        oth = _cosine_rows(var_t, oth_t) * (1.0 / tau)
        terms.append(ad.exp(oth).sum(axis=1, keepdims=True))
    den = terms[0]
    for t in terms[1:]:
        den = den + t
    loss = (ad.log(den) - pos_sc).mean()
    loss.backward()
    grads = {
        "clean": clean_t.grad.reshape(-1).copy(),
        "variants": var_t.grad.copy(),
        "others": oth_t.grad.copy() if oth_t is not None else np.zeros((0, v_arr.shape[1])),
    }
    return float(loss.value), grads


def quality_loss(e_clean, probe: MlpHead, d_j):
    """Sum of predicted distortion probabilities on the clean embedding.

    Returns (loss, grads) with grads for the clean embedding and every probe
    parameter; penalizing this keeps clean representations distortion-free.
    """
    target = labels_to_multihot(d_j)
    clean_t = ad.parameter(np.asarray(e_clean, dtype=np.float64).reshape(1, -1))
    probe_t = {k: ad.parameter(v) for k, v in probe.arrays().items()}
    p = _head_tape(probe_t, clean_t)
    loss = ad.mul(p, ad.constant(target.reshape(1, -1))).sum()
    loss.backward()
    grads = {"clean": clean_t.grad.reshape(-1).copy()}
    grads.update({k: t.grad.copy() for k, t in probe_t.items()})
    return float(loss.value), grads


def total_loss(batch, probe: MlpHead, tau: float = 0.10, scheme: str = "jaccard") -> float:
    """Mean over clean groups of (1/m) * sum_j (contrastive_j + quality_j).

    ``batch`` is a list of groups: (e_clean, [(e_variant, labels), ...],
    [e_other, ...]).
    """
    if not batch:
        raise ValueError("empty batch")
    vals = []
    for e_clean, variants, others in batch:
        l_ctr, _ = contrastive_loss(e_clean, variants, others, tau, scheme)
        l_q = 0.0
        for _, d_j in variants:
            q, _ = quality_loss(e_clean, probe, d_j)
            l_q += q
        vals.append(l_ctr + l_q / len(variants))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Batched training objective (tape over encoder + probe parameters)
# ---------------------------------------------------------------------------

def _batch_objective(
    params_t: dict[str, ad.Tensor],
    probe_t: dict[str, ad.Tensor],
    x_clean: np.ndarray,
    x_var: np.ndarray,
    group_of: np.ndarray,
    weights: np.ndarray,
    sib_mask: np.ndarray,
    oth_mask: np.ndarray,
    targets: np.ndarray,
    coef: np.ndarray,
    tau: float,
    include_pos_in_den: bool,
):
    e_clean = _encode_tape(params_t, x_clean)  # (B, D)
    e_var = _encode_tape(params_t, x_var)  # (M, D)
    sims_cc = ad.matmul(e_var, e_clean.T)  # (M, B) cosines (rows unit)
    pos = sims_cc[np.arange(len(group_of)), group_of].reshape(-1, 1) * (1.0 / tau)
    sims_vv = ad.matmul(e_var, e_var.T) * (1.0 / tau)  # (M, M)
    den = ad.mul(ad.exp(sims_vv), ad.constant(weights * sib_mask + oth_mask)).sum(axis=1, keepdims=True)
    if include_pos_in_den:
        den = den + ad.exp(pos)
    l_ctr_vec = ad.log(den) - pos  # (M, 1)

    probs = _head_tape(probe_t, e_clean)  # (B, K)
    probs_per_var = probs[group_of]  # (M, K)
    l_qual_vec = ad.mul(probs_per_var, ad.constant(targets)).sum(axis=1, keepdims=True)

    total = ad.mul(l_ctr_vec + l_qual_vec, ad.constant(coef.reshape(-1, 1))).sum()
    l_ctr_val = float((l_ctr_vec.value * coef.reshape(-1, 1)).sum())
    l_qual_val = float((l_qual_vec.value * coef.reshape(-1, 1)).sum())
    pos_cos_mean = float(np.mean(pos.value * tau))
    return total, l_ctr_val, l_qual_val, pos_cos_mean


class _Optimizer:
    def __init__(self, kind: str, lr: float, params: dict[str, np.ndarray]):
        self.kind = kind
        self.lr = lr
        if kind == "adam":
            self.m = {k: np.zeros_like(v) for k, v in params.items()}
            self.v = {k: np.zeros_like(v) for k, v in params.items()}
            self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        if self.kind == "gd":
            for k, g in grads.items():
                params[k] -= self.lr * g
            return
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mh = self.m[k] / (1 - b1**self.t)
            vh = self.v[k] / (1 - b2**self.t)
            params[k] -= self.lr * mh / (np.sqrt(vh) + eps)


def _group_train_items(triplets, manifest_dir, config: TrainConfig, feature_cache=None):
    """Group train-split items by clean image and extract features."""
    from .dataset import load_image

    cache = feature_cache if feature_cache is not None else {}

    def feats_of(rel_path: str, trip, which: str) -> np.ndarray:
        if rel_path not in cache:
            cache[rel_path] = image_features(load_image(trip, manifest_dir, which))
        return cache[rel_path]

    groups: dict[str, dict] = {}
    for t in triplets:
        if t.split != "train":
            continue
        g = groups.setdefault(t.clean_path, {"variants": []})
        g["clean_feats"] = feats_of(t.clean_path, t, "clean")
        if len(g["variants"]) < config.variants_per_clean:
            g["variants"].append((feats_of(t.distorted_path, t, "distorted"), t.applied_labels))
    return [g for g in groups.values() if g["variants"]]


def train_encoder(triplets, manifest_dir, config: TrainConfig | None = None, feature_cache=None):
    """Train the encoder and probe head on the manifest's train split.

    Returns (EncoderParams, probe MlpHead, log) where log is a list of
    per-epoch dicts (contrastive term, quality term, mean positive cosine).
    """
    config = config or TrainConfig()
    config.validate()
    groups = _group_train_items(triplets, manifest_dir, config, feature_cache)
    if not groups:
        raise ValueError("manifest has no train-split items")

    rng = child_rng(config.seed, 100)
    feats_all = np.stack([g["clean_feats"] for g in groups] + [v[0] for g in groups for v in g["variants"]])
    params = init_encoder(config, rng, feature_dim=feats_all.shape[1])
    params.feat_mean = feats_all.mean(axis=0)
    params.feat_std = np.maximum(feats_all.std(axis=0), 1e-6)
    probe = init_head(config.embed_dim, config.probe_hidden, len(CATEGORIES), rng)

    p_arrays = {k: v for k, v in params.arrays().items() if k.startswith(("W", "b"))}
    h_arrays = probe.arrays()
    opt_p = _Optimizer(config.optimizer, config.learning_rate, p_arrays)
    opt_h = _Optimizer(config.optimizer, config.learning_rate, h_arrays)

    log: list[dict] = []
    order = np.arange(len(groups))
    for epoch in range(config.epochs):
        rng.shuffle(order)
        ep_ctr = ep_qual = ep_pos = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_cleans):
            idx = order[start : start + config.batch_cleans]
            if len(idx) < 2:
                continue
            batch = [groups[i] for i in idx]
            x_clean = _standardize(np.stack([g["clean_feats"] for g in batch]), params)
            var_feats, group_of, label_sets = [], [], []
            for gi, g in enumerate(batch):
                for fv, labs in g["variants"]:
                    var_feats.append(fv)
                    group_of.append(gi)
                    label_sets.append(frozenset(labs))
            x_var = _standardize(np.stack(var_feats), params)
            group_of = np.asarray(group_of)
            same = group_of[:, None] == group_of[None, :]
            sib_mask = same.astype(float)
            np.fill_diagonal(sib_mask, 0.0)
            oth_mask = (~same).astype(float)
            targets = np.stack([labels_to_multihot(d) for d in label_sets])
            weights = pair_weight_matrix(config.weighting_scheme, targets)
            counts = np.bincount(group_of, minlength=len(batch))
            coef = 1.0 / (counts[group_of] * len(batch))

            params_t = {k: ad.parameter(v) for k, v in p_arrays.items()}
            probe_t = {k: ad.parameter(v) for k, v in h_arrays.items()}
            total, l_ctr, l_qual, pos_cos = _batch_objective(
                params_t,
                probe_t,
                x_clean,
                x_var,
                group_of,
                weights,
                sib_mask,
                oth_mask,
                targets,
                coef,
                config.tau,
                include_pos_in_den=(config.weighting_scheme == "none"),
            )
            total.backward()
            opt_p.step(p_arrays, {k: t.grad for k, t in params_t.items()})
            opt_h.step(h_arrays, {k: t.grad for k, t in probe_t.items()})
            ep_ctr += l_ctr
            ep_qual += l_qual
            ep_pos += pos_cos
            n_batches += 1
        log.append(
            {
                "epoch": epoch,
                "loss": (ep_ctr + ep_qual) / max(1, n_batches),
                "l_ctr": ep_ctr / max(1, n_batches),
                "l_qual": ep_qual / max(1, n_batches),
                "mean_pos_cos": ep_pos / max(1, n_batches),
            }
        )

    for k, v in p_arrays.items():
        setattr(params, k, v)
    for k, v in h_arrays.items():
        setattr(probe, k, v)
    return params, probe, log


def write_training_log(log, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["epoch", "loss", "l_ctr", "l_qual", "mean_pos_cos"])
        writer.writeheader()
        for row in log:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Classifier (trained on the frozen encoder)
# ---------------------------------------------------------------------------

def bce_loss(head_t: dict[str, ad.Tensor], embeddings: np.ndarray, targets: np.ndarray) -> ad.Tensor:
    """Per-item sum over categories of binary cross-entropy, averaged over items."""
    p = _head_tape(head_t, ad.constant(embeddings))
    y = ad.constant(targets)
    eps = 1e-12
    nll = ad.mul(y, ad.log(p + eps)) + ad.mul(1.0 - y, ad.log(1.0 - p + eps))
    return -nll.sum(axis=1).mean()


def train_classifier(encoder: EncoderParams, triplets, manifest_dir, config: TrainConfig | None = None, feature_cache=None) -> MlpHead:
    """Fit the deployment classifier head on frozen-encoder embeddings."""
    from .dataset import load_image

    config = config or TrainConfig()
    config.validate()
    cache = feature_cache if feature_cache is not None else {}
    feats, targets = [], []
    for t in triplets:
        if t.split != "train":
            continue
        if t.distorted_path not in cache:
            cache[t.distorted_path] = image_features(load_image(t, manifest_dir, "distorted"))
        feats.append(cache[t.distorted_path])
        targets.append(labels_to_multihot(t.applied_labels))
    if not feats:
        raise ValueError("manifest has no train-split items")
    emb = encode_features(encoder, np.stack(feats))
    y = np.stack(targets)

    rng = child_rng(config.seed, 200)
    head = init_head(encoder.embed_dim, config.classifier_hidden, len(CATEGORIES), rng)
    h_arrays = head.arrays()
    opt = _Optimizer(config.optimizer, config.classifier_lr, h_arrays)
    for _ in range(config.classifier_epochs):
        head_t = {k: ad.parameter(v) for k, v in h_arrays.items()}
        loss = bce_loss(head_t, emb, y)
        loss.backward()
        opt.step(h_arrays, {k: t.grad for k, t in head_t.items()})
    for k, v in h_arrays.items():
        setattr(head, k, v)
    return head


def predict_labels(classifier: MlpHead, embedding: np.ndarray, threshold: float = 0.85) -> frozenset:
    """Categories whose predicted probability strictly exceeds the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    p = classifier.probabilities(embedding)
    return frozenset(CATEGORIES[i] for i in np.nonzero(p > threshold)[0])


def to_auto_prompt(labels) -> str:
    """Standardized prompt for an automatically predicted label set."""
    if not labels:
        raise ValueError("no distortions detected; nothing to prompt for")
    return render_prompt(labels, style="fixed")


# ---------------------------------------------------------------------------
# Finite-difference verification harness
# ---------------------------------------------------------------------------

def finite_diff_check(loss_fn, params: dict[str, np.ndarray], epsilon: float = 1e-5, n_samples: int = 200, rng=None) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn(params) -> (loss_value, grads_dict)``.  Samples up to
    ``n_samples`` coordinates per parameter array (all coordinates if fewer).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    rng = rng or np.random.default_rng(0)
    base_loss, grads = loss_fn(params)
    if not np.isfinite(base_loss):
        raise ValueError("loss is not finite at the evaluation point")
    max_rel = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= n_samples else rng.choice(n, size=n_samples, replace=False)
        g_flat = grads[name].reshape(-1)
        for ci in coords:
            orig = flat[ci]
            flat[ci] = orig + epsilon
            lp, _ = loss_fn(params)
            flat[ci] = orig - epsilon
            lm, _ = loss_fn(params)
            flat[ci] = orig
            fd = (lp - lm) / (2.0 * epsilon)
            an = g_flat[ci]
            rel = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
            max_rel = max(max_rel, rel)
    return float(max_rel)
