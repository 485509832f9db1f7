"""Multi-scale style statistics and their analytic pixel gradients.

The feature function is a fixed L-level pyramid: level l is the image
average-pooled l times, expanded to identity + horizontal-difference +
vertical-difference channels.  Per level and channel we take the weighted
population mean and standard deviation, mirroring instance-normalization
statistics.  Every gradient here is a hand-derived chain rule through
mean, std, differencing and pooling, verified against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    DimensionError,
    avg_pool2,
    avg_pool2_adjoint,
    diff_channels,
    diff_channels_adjoint,
)

MAE = "mae"
MSE = "mse"

DEFAULT_EPSILON_VAR = 1e-8


@dataclass(frozen=True)
class PyramidConfig:
    levels: int = 4
    epsilon_var: float = DEFAULT_EPSILON_VAR

    def __post_init__(self):
        if self.levels < 1:
            raise DimensionError(f"levels must be >= 1, got {self.levels}")
        if self.epsilon_var <= 0:
            raise DimensionError("epsilon_var must be positive")

    @property
    def min_dim(self) -> int:
        return 2 ** (self.levels - 1) * 2


def equal_weights(levels: int = 4) -> np.ndarray:
    return np.ones(levels)


@dataclass
class StyleFeatures:
    """Per-level per-channel (mean, std) with multiplicative level weights.

    ``means[l]`` and ``stds[l]`` are (3C,) arrays of raw statistics; the
    weighted flat vector interleaves per level as [w*means, w*stds].
    """

    means: list = field(default_factory=list)
    stds: list = field(default_factory=list)
    weights: np.ndarray = None

    @property
    def levels(self) -> int:
        return len(self.means)

    @property
    def channels(self) -> int:
        return len(self.means[0])

    @property
    def dim(self) -> int:
        return sum(2 * len(m) for m in self.means)

    @property
    def vector(self) -> np.ndarray:
        parts = []
        for l in range(self.levels):
            w = self.weights[l]
            parts.append(w * self.means[l])
            parts.append(w * self.stds[l])
        return np.concatenate(parts)

    def csv_header(self) -> list[str]:
        cols = []
        for l in range(self.levels):
            for stat in ("mean", "std"):
                cols.extend(f"L{l}_c{c}_{stat}" for c in range(self.channels))
        return cols

    def csv_row(self) -> list[float]:
        return [float(v) for v in self.vector]


def _check_extract_input(img: np.ndarray, cfg: PyramidConfig) -> None:
    if img.ndim < 3:
        raise DimensionError(f"extract expects (..., H, W, C), got shape {img.shape}")
    h, w = img.shape[-3], img.shape[-2]
    if min(h, w) < cfg.min_dim:
        raise DimensionError(
            f"image {h}x{w} too small for {cfg.levels} pyramid levels (needs >= {cfg.min_dim})"
        )


def _forward(img: np.ndarray, cfg: PyramidConfig):
    """Pyramid forward pass; returns (pooled images, reps, means, vars, stds).

    Each entry of ``means``/``stds`` has shape (..., 3C); reps keep spatial dims.
    """
    _check_extract_input(img, cfg)
    pooled = [img]
    for _ in range(cfg.levels - 1):
        pooled.append(avg_pool2(pooled[-1]))
    reps, means, vars_, stds = [], [], [], []
    for x in pooled:
        rep = diff_channels(x)
        mu = rep.mean(axis=(-3, -2))
        var = ((rep - mu[..., None, None, :]) ** 2).mean(axis=(-3, -2))
        reps.append(rep)
        means.append(mu)
        vars_.append(var)
        stds.append(np.sqrt(var + cfg.epsilon_var))
    return pooled, reps, means, vars_, stds


def extract(img: np.ndarray, cfg: PyramidConfig, weights) -> StyleFeatures:
    """Weighted pyramid mean/std features of a single (H, W, C) image."""
    weights = np.asarray(weights, dtype=float)
    if len(weights) != cfg.levels:
        raise DimensionError(f"need {cfg.levels} level weights, got {len(weights)}")
    if np.any(weights < 0):
        raise DimensionError("level weights must be non-negative")
    _, _, means, _, stds = _forward(img, cfg)
    return StyleFeatures(means=list(means), stds=list(stds), weights=weights)


def batch_vectors(imgs: np.ndarray, cfg: PyramidConfig, weights) -> np.ndarray:
    """Weighted feature vectors for a (B, H, W, C) batch, shape (B, dim)."""
    weights = np.asarray(weights, dtype=float)
    _, _, means, _, stds = _forward(imgs, cfg)
    parts = []
    for l in range(cfg.levels):
        parts.append(weights[l] * means[l])
        parts.append(weights[l] * stds[l])
    return np.concatenate(parts, axis=-1)


def vector_backprop(imgs: np.ndarray, cfg: PyramidConfig, weights, dvec: np.ndarray) -> np.ndarray:
    """Pixel gradient of a scalar whose gradient w.r.t. the weighted feature
    vector is ``dvec`` (shape (..., dim)); works on batched images."""
    weights = np.asarray(weights, dtype=float)
    pooled, reps, means, _, stds = _forward(imgs, cfg)
    grad = np.zeros_like(imgs)
    off = 0
    for l in range(cfg.levels):
        nch = means[l].shape[-1]
        dmu = weights[l] * dvec[..., off : off + nch]
        dsd = weights[l] * dvec[..., off + nch : off + 2 * nch]
        off += 2 * nch
        rep = reps[l]
        n = rep.shape[-3] * rep.shape[-2]
        centered = rep - means[l][..., None, None, :]
        grad_rep = dmu[..., None, None, :] / n + dsd[..., None, None, :] * centered / (
            n * stds[l][..., None, None, :]
        )
        g = diff_channels_adjoint(grad_rep)
        for k in range(l, 0, -1):
            g = avg_pool2_adjoint(g, pooled[k - 1].shape[-3], pooled[k - 1].shape[-2])
        grad += g
    return grad


def _distance_dvec(diff: np.ndarray, metric: str) -> np.ndarray:
    n = diff.shape[-1]
    if metric == MAE:
        return np.sign(diff) / n
    if metric == MSE:
        return 2.0 * diff / n
    raise DimensionError(f"unknown distance metric {metric!r}")


def style_distance(a: StyleFeatures, b: StyleFeatures, metric: str = MAE) -> float:
    """Mean absolute or mean squared difference over the weighted vectors."""
    va, vb = a.vector, b.vector
    if va.shape != vb.shape:
        raise DimensionError(f"feature dimension mismatch: {va.shape} vs {vb.shape}")
    d = va - vb
    if metric == MAE:
        return float(np.mean(np.abs(d)))
    if metric == MSE:
        return float(np.mean(d * d))
    raise DimensionError(f"unknown distance metric {metric!r}")


def style_distance_grad(
    x: np.ndarray, f_ref: StyleFeatures, cfg: PyramidConfig, weights, metric: str = MAE
) -> np.ndarray:
    """Exact pixel gradient of style_distance(extract(x), f_ref).

    The MAE subgradient at a zero coordinate is taken as 0, so the gradient
    vanishes when the styles already match.
    """
    v = batch_vectors(x[None] if x.ndim == 3 else x, cfg, weights)
    r = f_ref.vector
    dvec = _distance_dvec(v - r, metric)
    g = vector_backprop(x[None] if x.ndim == 3 else x, cfg, weights, dvec)
    return g[0] if x.ndim == 3 else g


def mixed_features(batch: list[StyleFeatures], rng: np.random.Generator) -> StyleFeatures:
    """Per-level random recombination: each level's block is copied whole from
    a uniformly drawn batch member.  ``rng`` is a live generator; draws advance
    it, so repeated calls re-draw the indices."""
    if len(batch) == 0:
        raise DimensionError("mixed_features needs a non-empty batch")
    w0 = batch[0].weights
    means, stds = [], []
    for l in range(batch[0].levels):
        r = int(rng.integers(0, len(batch)))
        means.append(batch[r].means[l].copy())
        stds.append(batch[r].stds[l].copy())
    return StyleFeatures(means=means, stds=stds, weights=np.array(w0, dtype=float))


def feature_variance(batch: list[StyleFeatures]) -> float:
    """Mean over feature coordinates of the population variance across the batch."""
    if len(batch) < 2:
        raise DimensionError("feature_variance needs a batch of >= 2")
    v = np.stack([f.vector for f in batch])
    return float(((v - v.mean(axis=0)) ** 2).mean())


def feature_variance_grad(imgs: np.ndarray, cfg: PyramidConfig, weights):
    """Batch feature variance and its gradient w.r.t. every image pixel.

    Returns (nu, grads) with grads shaped like ``imgs`` (B, H, W, C).
    """
    if imgs.ndim != 4 or imgs.shape[0] < 2:
        raise DimensionError("feature_variance_grad needs a (B>=2, H, W, C) batch")
    v = batch_vectors(imgs, cfg, weights)
    b, dim = v.shape
    centered = v - v.mean(axis=0)
    nu = float((centered**2).mean())
    dvec = 2.0 * centered / (b * dim)
    return nu, vector_backprop(imgs, cfg, weights, dvec)
