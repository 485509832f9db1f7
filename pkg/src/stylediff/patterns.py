"""Procedural texture images used as data modes and style references.

All generators are deterministic given (name, shape, seed) and return
float64 images in [-1, 1].
"""

from __future__ import annotations

import numpy as np

from .numerics import ConfigError, RngStream

# distinct two-color palettes, RGB in [-1, 1]
PALETTES = {
    "ember": (np.array([0.9, -0.2, -0.7]), np.array([-0.6, -0.8, -0.2])),
    "sea": (np.array([-0.7, 0.1, 0.8]), np.array([-0.2, 0.7, 0.5])),
    "lime": (np.array([0.2, 0.8, -0.5]), np.array([-0.8, -0.3, -0.9])),
    "plum": (np.array([0.6, -0.5, 0.7]), np.array([0.9, 0.8, 0.1])),
    "slate": (np.array([0.4, 0.4, 0.5]), np.array([-0.5, -0.4, -0.6])),
}


def _blend(mask: np.ndarray, hi: np.ndarray, lo: np.ndarray, channels: int) -> np.ndarray:
    hi = hi[:channels]
    lo = lo[:channels]
    return mask[..., None] * hi + (1.0 - mask[..., None]) * lo


def h_stripes(h: int, w: int, channels: int = 3, period: int = 4, palette: str = "ember") -> np.ndarray:
    hi, lo = PALETTES[palette]
    mask = ((np.arange(h)[:, None] // (period // 2)) % 2 == 0) * np.ones((h, w))
    return _blend(mask.astype(float), hi, lo, channels)


def v_stripes(h: int, w: int, channels: int = 3, period: int = 4, palette: str = "sea") -> np.ndarray:
    hi, lo = PALETTES[palette]
    mask = ((np.arange(w)[None, :] // (period // 2)) % 2 == 0) * np.ones((h, w))
    return _blend(mask.astype(float), hi, lo, channels)


def checker(h: int, w: int, channels: int = 3, period: int = 4, palette: str = "lime") -> np.ndarray:
    hi, lo = PALETTES[palette]
    yy = np.arange(h)[:, None] // (period // 2)
    xx = np.arange(w)[None, :] // (period // 2)
    mask = ((yy + xx) % 2 == 0).astype(float)
    return _blend(mask, hi, lo, channels)


def radial(h: int, w: int, channels: int = 3, palette: str = "plum") -> np.ndarray:
    hi, lo = PALETTES[palette]
    yy = (np.arange(h) - (h - 1) / 2.0) / max(h - 1, 1)
    xx = (np.arange(w) - (w - 1) / 2.0) / max(w - 1, 1)
    r = np.sqrt(yy[:, None] ** 2 + xx[None, :] ** 2)
    mask = np.clip(1.0 - r / 0.75, 0.0, 1.0)
    return _blend(mask, hi, lo, channels)


def rings(h: int, w: int, channels: int = 3, palette: str = "slate", period: int = 6) -> np.ndarray:
    hi, lo = PALETTES[palette]
    yy = np.arange(h)[:, None] - (h - 1) / 2.0
    xx = np.arange(w)[None, :] - (w - 1) / 2.0
    r = np.sqrt(yy**2 + xx**2)
    mask = ((r // (period // 2)) % 2 == 0).astype(float)
    return _blend(mask, hi, lo, channels)


def blotches(h: int, w: int, channels: int = 3, palette: str = "slate", seed: int = 0) -> np.ndarray:
    """Low-frequency seeded noise blended between the palette colors."""
    hi, lo = PALETTES[palette]
    gen = RngStream(seed, 77).generator()
    coarse = gen.random((max(h // 4, 1), max(w // 4, 1)))
    mask = np.repeat(np.repeat(coarse, 4, axis=0), 4, axis=1)[:h, :w]
    return _blend(mask, hi, lo, channels)


TEMPLATES = {
    "stripes_h": h_stripes,
    "stripes_v": v_stripes,
    "checker": checker,
    "radial": radial,
    "rings": rings,
    "blotches": blotches,
}


def style_template(name: str, h: int = 16, w: int = 16, channels: int = 3, seed: int = 0, **kwargs) -> np.ndarray:
    """Render a named deterministic template; same name + seed -> identical image."""
    if name not in TEMPLATES:
        raise ConfigError(f"unknown style template {name!r}; options: {sorted(TEMPLATES)}")
    fn = TEMPLATES[name]
    if name == "blotches":
        return fn(h, w, channels, seed=seed, **kwargs)
    return fn(h, w, channels, **kwargs)
