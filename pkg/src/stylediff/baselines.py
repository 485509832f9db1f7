"""Two-step comparison arms: post-hoc style transfer on already-drawn samples.

Both baselines measure style in the same pyramid feature space as the
guided sampler, so the three-way comparison shares one style-loss axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import style
from .numerics import ConfigError, DivergedChainError
from .style import MSE, PyramidConfig, StyleFeatures


@dataclass(frozen=True)
class TransferConfig:
    iterations: int = 200
    step_size: float = 0.05
    content_weight: float = 1.0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.step_size <= 0:
            raise ConfigError("step_size must be positive")
        if self.content_weight < 0:
            raise ConfigError("content_weight must be non-negative")


def iterative_transfer(
    content: np.ndarray,
    style_ref: StyleFeatures,
    cfg: TransferConfig = TransferConfig(),
    pyramid: PyramidConfig = PyramidConfig(),
    weights=None,
) -> tuple[np.ndarray, list[float]]:
    """Plain gradient descent on MSE style distance plus a quadratic content pull.

    Starts at the content image and runs a fixed step count; returns the final
    image and the loss trace.
    """
    if weights is None:
        weights = style_ref.weights
    x = content.copy()
    n = content.size
    trace: list[float] = []
    for _ in range(cfg.iterations):
        f = style.extract(x, pyramid, weights)
        loss = style.style_distance(f, style_ref, MSE) + cfg.content_weight * float(
            ((x - content) ** 2).mean()
        )
        if not np.isfinite(loss):
            raise DivergedChainError("iterative transfer diverged (non-finite loss)")
        trace.append(loss)
        g = style.style_distance_grad(x, style_ref, pyramid, weights, MSE)
        g = g + cfg.content_weight * 2.0 * (x - content) / n
        x = x - cfg.step_size * g
    return x, trace


def moment_match_transfer(content: np.ndarray, style_stats: StyleFeatures) -> np.ndarray:
    """One-shot channel-wise renormalization to the reference's level-0 stats.

    Per color channel: x' = (x - mu_x) * (sigma_y / sigma_x) + mu_y, using the
    reference's level-0 identity-channel mean/std.  The scale is chosen so
    re-extracting the output reproduces the reference statistics exactly;
    degenerate (constant) channels pass through unchanged.
    """
    c = content.shape[-1]
    eps = style.DEFAULT_EPSILON_VAR
    out = content.copy()
    for ch in range(c):
        mu_x = content[..., ch].mean()
        var_x = content[..., ch].var()
        if var_x <= 0.0:
            continue
        mu_y = float(style_stats.means[0][ch])
        sigma_y = float(style_stats.stds[0][ch])  # includes eps under the root
        target_var = max(sigma_y**2 - eps, 0.0)
        scale = np.sqrt(target_var / var_x)
        out[..., ch] = (content[..., ch] - mu_x) * scale + mu_y
    return out
