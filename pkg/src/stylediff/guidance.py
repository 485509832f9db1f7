"""Guidance modes applied as mean perturbations inside the sampler step.

Three modes share one mechanic: a scalar objective over style features of
the batch's clean-image estimates, differentiated back to the chain input
and scaled by s_t * Sigma_t.

  supervised   pulls each chain toward a reference image's features
  contrastive  ascends the within-batch feature variance (note the + sign)
  synonymous   pulls every chain toward a per-step randomly mixed reference
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import style
from .diffusion import NoiseSchedule, StepOutput
from .numerics import ConfigError, DivergedChainError, RngStream
from .style import MAE, MSE, PyramidConfig, StyleFeatures

MODES = ("none", "supervised", "contrastive", "synonymous")
PAIR_X0HAT = "x0hat"
PAIR_XT = "xt"


@dataclass
class GuidanceConfig:
    """One row of the ablation grid: mode plus every guidance toggle."""

    mode: str = "none"
    s0: float = 0.0
    adaptive_scale: bool = True
    distance: str = MAE
    pair: str = PAIR_X0HAT
    weights: tuple = (1.0, 1.0, 1.0, 1.0)
    grad_through_eps: bool = False
    gamma_c: float = 0.0
    min_guided_step: int = 1  # guidance applies for t >= this step
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown guidance mode {self.mode!r}; options: {MODES}")
        if self.s0 < 0 or self.gamma_c < 0:
            raise ConfigError("s0 and gamma_c must be non-negative")
        if self.distance not in (MAE, MSE):
            raise ConfigError(f"distance must be '{MAE}' or '{MSE}'")
        if self.pair not in (PAIR_X0HAT, PAIR_XT):
            raise ConfigError(f"pair must be '{PAIR_X0HAT}' or '{PAIR_XT}'")
        if len(self.weights) != self.pyramid.levels:
            raise ConfigError(
                f"{self.pyramid.levels} pyramid levels need {self.pyramid.levels} weights, "
                f"got {len(self.weights)}"
            )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "s0": self.s0,
            "adaptive": self.adaptive_scale,
            "distance": self.distance,
            "pair": self.pair,
            "weights": list(float(w) for w in self.weights),
            "gamma_c": self.gamma_c,
            "grad_through_eps": self.grad_through_eps,
            "min_guided_step": self.min_guided_step,
            "levels": self.pyramid.levels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GuidanceConfig":
        return cls(
            mode=d.get("mode", "none"),
            s0=float(d.get("s0", 0.0)),
            adaptive_scale=bool(d.get("adaptive", True)),
            distance=d.get("distance", MAE),
            pair=d.get("pair", PAIR_X0HAT),
            weights=tuple(d.get("weights", (1.0, 1.0, 1.0, 1.0))),
            grad_through_eps=bool(d.get("grad_through_eps", False)),
            gamma_c=float(d.get("gamma_c", 0.0)),
            min_guided_step=int(d.get("min_guided_step", 1)),
            pyramid=PyramidConfig(levels=int(d.get("levels", 4))),
        )


def effective_scale(config: GuidanceConfig, t: int, sched: NoiseSchedule) -> float:
    """s_t = s0 / sqrt(btilde_t) when adaptive, else s0.

    btilde_1 = 0, so the adaptive form falls back to s0 / sqrt(beta_1) at the
    final step to avoid an inf * 0 indeterminate in the perturbation.
    """
    if not config.adaptive_scale:
        return config.s0
    var = sched.posterior_var(t)
    if var <= 0.0:
        return config.s0 / np.sqrt(sched.beta(1))
    return config.s0 / np.sqrt(var)


class GuidanceContext:
    """Guidance configuration bound to its reference features and RNG stream."""

    def __init__(self, config: GuidanceConfig, reference: StyleFeatures | None = None,
                 rng: RngStream = RngStream(0)):
        if config.mode == "supervised" and reference is None:
            raise ConfigError("supervised guidance requires reference features")
        if config.mode in ("contrastive", "synonymous") and reference is not None:
            raise ConfigError(f"{config.mode} guidance must not carry a reference")
        self.config = config
        self.reference = reference
        self._mix_gen = rng.child(4).generator()

    @property
    def min_batch(self) -> int:
        return 2 if self.config.mode in ("contrastive", "synonymous") else 1

    @property
    def needs_anchor(self) -> bool:
        return self.config.mode == "contrastive" and self.config.gamma_c > 0

    def _input_factor(self, t: int, sched: NoiseSchedule, model) -> float:
        """Chain-rule factor mapping a gradient at x0_hat to one at x_t."""
        if self.config.pair == PAIR_XT and self.config.mode == "supervised":
            return 1.0
        if self.config.grad_through_eps:
            if not getattr(model, "exact_jacobian", False):
                raise ConfigError(
                    "grad_through_eps requires a denoiser with a closed-form x0 jacobian"
                )
            return float(model.x0_jacobian(t, sched))
        return 1.0 / np.sqrt(sched.alpha_bar(t))

    def perturb(self, mu, x_t, step: StepOutput, t: int, sched: NoiseSchedule, model,
                anchor_x0=None):
        """Return (perturbed mean batch, telemetry row or None)."""
        cfg = self.config
        if cfg.mode == "none" or t < cfg.min_guided_step:
            return mu, None
        s_t = effective_scale(cfg, t, sched)
        sigma_t = sched.posterior_var(t)
        factor = self._input_factor(t, sched, model)

        if cfg.mode == "supervised":
            target = x_t if cfg.pair == PAIR_XT else step.x0_hat
            vec = style.batch_vectors(target, cfg.pyramid, cfg.weights)
            diff = vec - self.reference.vector
            dvec = style._distance_dvec(diff, cfg.distance)
            grads = style.vector_backprop(target, cfg.pyramid, cfg.weights, dvec)
            if cfg.distance == MAE:
                dist = float(np.abs(diff).mean())
            else:
                dist = float((diff**2).mean())
            mu_hat = mu - s_t * sigma_t * factor * grads
        elif cfg.mode == "contrastive":
            nu, grads = style.feature_variance_grad(step.x0_hat, cfg.pyramid, cfg.weights)
            dist = nu
            mu_hat = mu + s_t * sigma_t * factor * grads
            if anchor_x0 is not None:
                mu_hat = mu_hat - cfg.gamma_c * factor * _anchor_grad(
                    step.x0_hat, anchor_x0, cfg.pyramid
                )
        else:  # synonymous
            feats = [
                style.extract(step.x0_hat[b], cfg.pyramid, cfg.weights)
                for b in range(step.x0_hat.shape[0])
            ]
            f_m = style.mixed_features(feats, self._mix_gen)
            vec = style.batch_vectors(step.x0_hat, cfg.pyramid, cfg.weights)
            diff = vec - f_m.vector
            dvec = style._distance_dvec(diff, cfg.distance)
            grads = style.vector_backprop(step.x0_hat, cfg.pyramid, cfg.weights, dvec)
            if cfg.distance == MAE:
                dist = float(np.abs(diff).mean())
            else:
                dist = float((diff**2).mean())
            mu_hat = mu - s_t * sigma_t * factor * grads

        if not np.all(np.isfinite(grads)):
            raise DivergedChainError(f"guidance gradient non-finite at step t={t}", step=t)
        grad_norm = float(np.sqrt((grads**2).sum(axis=(1, 2, 3))).mean())
        row = {"step": t, "style_distance": dist, "grad_norm": grad_norm, "scale": s_t}
        return mu_hat, row


def _anchor_grad(x0_hat: np.ndarray, anchor_x0: np.ndarray, cfg: PyramidConfig) -> np.ndarray:
    """Gradient of the content anchor: MSE between deepest-level identity-channel
    means of each chain's x0_hat and its unguided twin's."""
    from .numerics import avg_pool2, avg_pool2_adjoint

    def deep_means(imgs):
        pooled = [imgs]
        for _ in range(cfg.levels - 1):
            pooled.append(avg_pool2(pooled[-1]))
        return pooled, pooled[-1].mean(axis=(-3, -2))

    pooled, mu = deep_means(x0_hat)
    _, mu_anchor = deep_means(anchor_x0)
    c = mu.shape[-1]
    deep = pooled[-1]
    n = deep.shape[-3] * deep.shape[-2]
    # d/dpixel of mean((mu - mu_anchor)^2) over channels
    g = np.broadcast_to(
        (2.0 * (mu - mu_anchor) / c)[..., None, None, :] / n, deep.shape
    ).copy()
    for k in range(cfg.levels - 1, 0, -1):
        g = avg_pool2_adjoint(g, pooled[k - 1].shape[-3], pooled[k - 1].shape[-2])
    return g
