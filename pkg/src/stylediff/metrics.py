"""Assessment metrics: style loss, content likelihood, batch diversity, PCA.

Assessment is deliberately decoupled from guidance: style loss always uses
MSE over equal level weights, whatever configuration produced the sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import style
from .denoisers import GaussianData, GmmData
from .numerics import DimensionError
from .style import MSE, PyramidConfig, StyleFeatures, equal_weights


@dataclass
class MetricReport:
    style_loss: float = 0.0
    content_score: float = 0.0
    batch_diversity: float = 0.0
    rows: list = field(default_factory=list)


def assessment_features(img: np.ndarray, pyramid: PyramidConfig = PyramidConfig()) -> StyleFeatures:
    """Equal-weight features used for all quantitative assessment."""
    return style.extract(img, pyramid, equal_weights(pyramid.levels))


def style_loss(x: np.ndarray, y_features: StyleFeatures, pyramid: PyramidConfig = PyramidConfig()) -> float:
    """MSE style distance at equal weights, independent of guidance settings."""
    return style.style_distance(assessment_features(x, pyramid), y_features, MSE)


def content_score(x: np.ndarray, data) -> float:
    """Per-pixel log-density of x under the known data law."""
    npix = x.size
    if isinstance(data, GaussianData):
        if x.shape != data.shape:
            raise DimensionError(f"shape mismatch: {x.shape} vs {data.shape}")
        var = data.sigma0**2
        ll = -0.5 * ((x - data.mean_image) ** 2).sum() / var - 0.5 * npix * np.log(
            2.0 * np.pi * var
        )
        return float(ll / npix)
    if isinstance(data, GmmData):
        if x.shape != data.shape:
            raise DimensionError(f"shape mismatch: {x.shape} vs {data.shape}")
        sigmas = np.asarray(data.sigmas, dtype=float)
        sq = ((x[None] - data.means) ** 2).sum(axis=(-3, -2, -1))
        logs = (
            np.log(np.asarray(data.weights, dtype=float))
            - 0.5 * sq / sigmas**2
            - 0.5 * npix * np.log(2.0 * np.pi * sigmas**2)
        )
        m = logs.max()
        return float((m + np.log(np.exp(logs - m).sum())) / npix)
    raise TypeError(f"unsupported data law {type(data).__name__}")


def batch_diversity(batch: np.ndarray, pyramid: PyramidConfig = PyramidConfig()) -> float:
    """Mean pairwise MSE style distance (equal weights) over unordered pairs."""
    if batch.ndim != 4 or batch.shape[0] < 2:
        raise DimensionError("batch_diversity needs a (B>=2, H, W, C) batch")
    vecs = style.batch_vectors(batch, pyramid, equal_weights(pyramid.levels))
    b = vecs.shape[0]
    total = 0.0
    for i in range(b):
        for j in range(i + 1, b):
            d = vecs[i] - vecs[j]
            total += float((d * d).mean())
    return total / (b * (b - 1) / 2)


def pca_embed(features: list[StyleFeatures], dims: int = 2) -> np.ndarray:
    """Deterministic PCA projection onto the top principal axes.

    Power iteration with a fixed initial vector and deflation; each axis's
    largest-magnitude loading is made positive so the output has a fixed
    sign convention.
    """
    if len(features) < dims:
        raise DimensionError(f"need at least {dims} samples, got {len(features)}")
    x = np.stack([f.vector for f in features])
    x = x - x.mean(axis=0)
    cov = x.T @ x / len(features)
    d = cov.shape[0]
    axes = []

    def drop_found(w):
        for a in axes:
            w = w - (a @ w) * a
        return w

    for _ in range(dims):
        v = np.ones(d) / np.sqrt(d)
        v[0] += 1e-3  # break symmetry against eigvectors orthogonal to ones
        v = drop_found(v)
        v /= np.linalg.norm(v)
        for _ in range(500):
            # re-orthogonalize every step so rounding noise in the deflated
            # matrix cannot pull the iterate back onto an earlier axis
            w = drop_found(cov @ v)
            nw = np.linalg.norm(w)
            if nw < 1e-30:
                v = np.zeros(d)
                break
            v = w / nw
        lam = float(v @ cov @ v)
        if np.linalg.norm(v) > 0:
            k = int(np.argmax(np.abs(v)))
            if v[k] < 0:
                v = -v
            cov = cov - lam * np.outer(v, v)
        axes.append(v)
    return x @ np.stack(axes, axis=1)


def sign_test_pvalue(successes: int, n: int) -> float:
    """One-sided exact binomial sign test against p = 1/2."""
    return sum(comb(n, k) for k in range(successes, n + 1)) / 2.0**n
