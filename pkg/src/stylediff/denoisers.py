"""Noise predictors: closed-form oracles for known data laws and a trainable
per-timestep affine model fit with the standard MSE noise-prediction loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import patterns
from .diffusion import NoiseSchedule
from .numerics import ConfigError, DimensionError, DivergedChainError, RngStream


@dataclass(frozen=True)
class GaussianData:
    """Isotropic Gaussian data law N(mean_image, sigma0^2 I) in pixel space."""

    mean_image: np.ndarray
    sigma0: float

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ConfigError(f"sigma0 must be positive, got {self.sigma0}")

    @property
    def shape(self):
        return self.mean_image.shape

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return self.mean_image + self.sigma0 * gen.standard_normal((n, *self.shape))


@dataclass(frozen=True)
class GmmData:
    """Image-level Gaussian mixture: component k is N(means[k], sigmas[k]^2 I)."""

    weights: np.ndarray
    means: np.ndarray  # (K, H, W, C)
    sigmas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("mixture weights must be positive and sum to 1")
        if np.any(np.asarray(self.sigmas) <= 0):
            raise ConfigError("component sigmas must be positive")
        if self.means.ndim != 4 or len(self.means) != len(w) or len(self.sigmas) != len(w):
            raise DimensionError("means must be (K, H, W, C) matching weights/sigmas")

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def shape(self):
        return self.means.shape[1:]

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        ks = gen.choice(self.K, size=n, p=self.weights)
        eps = gen.standard_normal((n, *self.shape))
        return self.means[ks] + np.asarray(self.sigmas)[ks, None, None, None] * eps


def default_style_population(h: int = 16, w: int = 16, channels: int = 3, sigma: float = 0.1) -> GmmData:
    """Four-mode procedural texture population with distinct palettes."""
    means = np.stack(
        [
            patterns.h_stripes(h, w, channels, palette="ember"),
            patterns.v_stripes(h, w, channels, palette="sea"),
            patterns.checker(h, w, channels, palette="lime"),
            patterns.radial(h, w, channels, palette="plum"),
        ]
    )
    return GmmData(weights=np.full(4, 0.25), means=means, sigmas=np.full(4, sigma))


def _gaussian_shrinkage(abar: float, sigma0: float) -> float:
    """d E[x0 | x_t] / d x_t for the Gaussian law (also d x0_hat / d x_t)."""
    return np.sqrt(abar) * sigma0**2 / (abar * sigma0**2 + 1.0 - abar)


def analytic_gaussian_eps(x_t: np.ndarray, t: int, sched: NoiseSchedule, data: GaussianData) -> np.ndarray:
    """Exact posterior-mean noise prediction for Gaussian data.

    E[x0|x_t] = m + c_t (x_t - sqrt(abar) m) with shrinkage
    c_t = sqrt(abar) sigma0^2 / (abar sigma0^2 + 1 - abar), and
    eps_hat = (x_t - sqrt(abar) E[x0|x_t]) / sqrt(1 - abar).
    """
    abar = sched.alpha_bar(t)
    m = data.mean_image
    if x_t.shape[-3:] != m.shape:
        raise DimensionError(f"x_t trailing shape {x_t.shape[-3:]} != data shape {m.shape}")
    c = _gaussian_shrinkage(abar, data.sigma0)
    x0_post = m + c * (x_t - np.sqrt(abar) * m)
    return (x_t - np.sqrt(abar) * x0_post) / np.sqrt(1.0 - abar)


def analytic_gmm_eps(x_t: np.ndarray, t: int, sched: NoiseSchedule, data: GmmData) -> np.ndarray:
    """Exact mixture noise prediction: responsibility-weighted Gaussian answers.

    Responsibilities use the marginal p(x_t) = sum_k w_k N(sqrt(abar) m_k,
    (abar sigma_k^2 + 1 - abar) I), evaluated in log space.
    """
    abar = sched.alpha_bar(t)
    batched = x_t.ndim == 4
    x = x_t if batched else x_t[None]
    if x.shape[1:] != data.shape:
        raise DimensionError(f"x_t trailing shape {x.shape[1:]} != data shape {data.shape}")
    npix = int(np.prod(data.shape))
    sigmas = np.asarray(data.sigmas, dtype=float)
    marg_var = abar * sigmas**2 + 1.0 - abar  # (K,)

    # log responsibilities, (B, K)
    diff = x[:, None] - np.sqrt(abar) * data.means[None]  # (B, K, H, W, C)
    sq = (diff**2).sum(axis=(-3, -2, -1))
    logp = (
        np.log(np.asarray(data.weights, dtype=float))[None]
        - 0.5 * sq / marg_var[None]
        - 0.5 * npix * np.log(2.0 * np.pi * marg_var)[None]
    )
    logp -= logp.max(axis=1, keepdims=True)
    resp = np.exp(logp)
    resp /= resp.sum(axis=1, keepdims=True)

    c = np.sqrt(abar) * sigmas**2 / marg_var  # per-component shrinkage (K,)
    x0_post_k = data.means[None] + c[None, :, None, None, None] * diff
    eps_k = (x[:, None] - np.sqrt(abar) * x0_post_k) / np.sqrt(1.0 - abar)
    eps = np.einsum("bk,bkhwc->bhwc", resp, eps_k)
    return eps if batched else eps[0]


class AnalyticGaussianDenoiser:
    """Noise-predictor contract around the exact Gaussian score."""

    exact_jacobian = True

    def __init__(self, data: GaussianData):
        self.data = data

    def predict(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        return analytic_gaussian_eps(x_t, t, sched, self.data)

    def x0_jacobian(self, t: int, sched: NoiseSchedule) -> float:
        """Scalar d x0_hat / d x_t (x0_hat is affine in x_t for this model)."""
        return _gaussian_shrinkage(sched.alpha_bar(t), self.data.sigma0)


class AnalyticGmmDenoiser:
    """Noise-predictor contract around the exact mixture score."""

    exact_jacobian = False

    def __init__(self, data: GmmData):
        self.data = data

    def predict(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        return analytic_gmm_eps(x_t, t, sched, self.data)


@dataclass
class AffineDenoiser:
    """Per-timestep affine predictor eps_hat = a_t x_t + b_t m_hat."""

    a: np.ndarray  # (T,), index t-1
    b: np.ndarray  # (T,)
    m_hat: np.ndarray  # (H, W, C)

    exact_jacobian = False

    def predict(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
        sched._check_t(t)
        return self.a[t - 1] * x_t + self.b[t - 1] * self.m_hat

    def save(self, path) -> None:
        """Flat text format: one 't a_t b_t' line per step, then m_hat rows."""
        h, w, c = self.m_hat.shape
        lines = [f"affine-denoiser T={len(self.a)} shape={h}x{w}x{c}"]
        for t in range(1, len(self.a) + 1):
            lines.append(f"{t} {float(self.a[t - 1])!r} {float(self.b[t - 1])!r}")
        lines.append("m_hat")
        flat = self.m_hat.reshape(h * w, c)
        for row in flat:
            lines.append(" ".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "AffineDenoiser":
        lines = Path(path).read_text().strip().split("\n")
        header = lines[0].split()
        T = int(header[1].split("=")[1])
        h, w, c = (int(v) for v in header[2].split("=")[1].split("x"))
        a = np.zeros(T)
        b = np.zeros(T)
        for line in lines[1 : T + 1]:
            ts, av, bv = line.split()
            a[int(ts) - 1] = float(av)
            b[int(ts) - 1] = float(bv)
        if lines[T + 1] != "m_hat":
            raise ConfigError(f"malformed affine denoiser file {path}")
        flat = np.array([[float(v) for v in line.split()] for line in lines[T + 2 :]])
        return cls(a=a, b=b, m_hat=flat.reshape(h, w, c))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    iterations: int = 50_000
    batch_size: int = 32

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("invalid training hyperparameters")


def optimal_affine_coeffs(sched: NoiseSchedule, data: GaussianData) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form least-squares optimum for the Gaussian law, from the
    linearity of the analytic predictor: eps_hat = a* x_t + (b* m)."""
    a = np.zeros(sched.T)
    bias_scale = np.zeros(sched.T)
    for t in range(1, sched.T + 1):
        abar = sched.alpha_bar(t)
        c = _gaussian_shrinkage(abar, data.sigma0)
        a[t - 1] = (1.0 - np.sqrt(abar) * c) / np.sqrt(1.0 - abar)
        bias_scale[t - 1] = -np.sqrt(abar) * a[t - 1]
    return a, bias_scale


def train_affine(
    data, sched: NoiseSchedule, hyper: TrainConfig = TrainConfig(), rng: RngStream = RngStream(0)
) -> tuple[AffineDenoiser, list[float]]:
    """SGD on E||eps - eps_hat||^2 over (x0, t, eps) draws.

    Initialization is a = 0, b = 1, m_hat = 0, so the untrained model predicts
    zero noise everywhere; b = 1 lets the shared bias image start learning.
    Returns the fitted model and the per-iteration batch losses.
    """
    shape = data.shape
    npix = int(np.prod(shape))
    T = sched.T
    model = AffineDenoiser(a=np.zeros(T), b=np.ones(T), m_hat=np.zeros(shape))
    gen = rng.child(3).generator()
    lr = hyper.learning_rate
    losses: list[float] = []
    sqrt_abar = np.sqrt(sched.alpha_bars)  # index by t
    sqrt_1m = np.sqrt(1.0 - sched.alpha_bars)

    for _ in range(hyper.iterations):
        B = hyper.batch_size
        ts = gen.integers(1, T + 1, size=B)
        x0 = data.sample(B, gen)
        eps = gen.standard_normal((B, *shape))
        x_t = sqrt_abar[ts][:, None, None, None] * x0 + sqrt_1m[ts][:, None, None, None] * eps

        a_t = model.a[ts - 1][:, None, None, None]
        b_t = model.b[ts - 1][:, None, None, None]
        pred = a_t * x_t + b_t * model.m_hat
        resid = pred - eps
        loss = float((resid**2).sum() / (B * npix))
        if not np.isfinite(loss):
            raise DivergedChainError("affine training diverged (non-finite loss)")
        losses.append(loss)

        ga = 2.0 * (resid * x_t).mean(axis=(1, 2, 3))
        gb = 2.0 * (resid * model.m_hat).mean(axis=(1, 2, 3))
        # pixels decouple in the loss, so m_hat takes the per-pixel gradient
        # (no 1/npix) and converges at the same rate as the scalars
        gm = 2.0 * (model.b[ts - 1][:, None, None, None] * resid).mean(axis=0)
        np.subtract.at(model.a, ts - 1, lr * ga / B)
        np.subtract.at(model.b, ts - 1, lr * gb / B)
        model.m_hat -= lr * gm
    return model, losses
