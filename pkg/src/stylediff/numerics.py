"""Raster primitives, counter-based seeded randomness, pooling and differencing.

Images are plain float64 numpy arrays of shape (H, W, C), nominally in
[-1, 1] for clean samples and unbounded mid-diffusion.  All operations
accept extra leading batch axes, i.e. arrays of shape (..., H, W, C).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when an image is too small or mis-shaped for an operation."""


class ConfigError(ValueError):
    """Raised for invalid configuration values or incompatible settings."""


class NumericGuardError(ValueError):
    """Raised when a value crosses a numeric safety threshold."""


class DivergedChainError(RuntimeError):
    """A sampling chain or optimization produced non-finite / exploding values."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Every chain, timestep and batch-level draw gets its own derived stream
    so results never depend on execution order.  ``generator()`` always
    returns a generator positioned at draw index 0, so a given stream is
    a pure function of its key.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *ids: int) -> "RngStream":
        """Derive an independent substream from integer path components."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *ids))
        return RngStream(self.seed, int(ss.generate_state(1, np.uint64)[0]))


def gaussian_noise(shape: tuple[int, ...], rng: RngStream) -> np.ndarray:
    """I.i.d. standard-normal image; deterministic per (seed, stream, index)."""
    if len(shape) == 0 or any(int(d) <= 0 for d in shape):
        raise DimensionError(f"noise shape must have positive dims, got {shape}")
    return rng.generator().standard_normal(shape)


def ensure_finite(arr: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericGuardError(f"{what} contains non-finite values")
    return arr


def _check_hw(img: np.ndarray, min_hw: int, op: str) -> tuple[int, int]:
    if img.ndim < 3:
        raise DimensionError(f"{op} expects (..., H, W, C), got shape {img.shape}")
    h, w = img.shape[-3], img.shape[-2]
    if h < min_hw or w < min_hw:
        raise DimensionError(f"{op} needs height and width >= {min_hw}, got {h}x{w}")
    return h, w


def avg_pool2(img: np.ndarray) -> np.ndarray:
    """Mean over non-overlapping 2x2 blocks; odd trailing row/column dropped."""
    h, w = _check_hw(img, 2, "avg_pool2")
    h2, w2 = h // 2 * 2, w // 2 * 2
    x = img[..., :h2, :w2, :]
    shape = x.shape[:-3] + (h2 // 2, 2, w2 // 2, 2, x.shape[-1])
    return x.reshape(shape).mean(axis=(-4, -2))


def avg_pool2_adjoint(grad: np.ndarray, h_in: int, w_in: int) -> np.ndarray:
    """Adjoint of avg_pool2 into an input of size (h_in, w_in)."""
    up = np.repeat(np.repeat(grad, 2, axis=-3), 2, axis=-2) / 4.0
    out = np.zeros(grad.shape[:-3] + (h_in, w_in, grad.shape[-1]), dtype=grad.dtype)
    out[..., : up.shape[-3], : up.shape[-2], :] = up
    return out


def diff_channels(img: np.ndarray) -> np.ndarray:
    """Stack identity, forward-horizontal and forward-vertical differences.

    Output has 3C channels; the last difference column/row is zero-padded so
    the spatial shape matches the input.
    """
    _check_hw(img, 2, "diff_channels")
    dx = np.zeros_like(img)
    dx[..., :, :-1, :] = img[..., :, 1:, :] - img[..., :, :-1, :]
    dy = np.zeros_like(img)
    dy[..., :-1, :, :] = img[..., 1:, :, :] - img[..., :-1, :, :]
    return np.concatenate([img, dx, dy], axis=-1)


def diff_channels_adjoint(grad: np.ndarray) -> np.ndarray:
    """Adjoint of diff_channels; grad has 3C channels, result has C."""
    c3 = grad.shape[-1]
    if c3 % 3 != 0:
        raise DimensionError(f"diff adjoint expects 3C channels, got {c3}")
    c = c3 // 3
    g_id = grad[..., :c]
    g_dx = grad[..., c : 2 * c]
    g_dy = grad[..., 2 * c :]
    out = g_id.copy()
    out[..., :, 1:, :] += g_dx[..., :, :-1, :]
    out[..., :, :-1, :] -= g_dx[..., :, :-1, :]
    out[..., 1:, :, :] += g_dy[..., :-1, :, :]
    out[..., :-1, :, :] -= g_dy[..., :-1, :, :]
    return out
