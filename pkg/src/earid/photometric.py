"""Photometric transforms: brightness, contrast, saturation and hue jitter.

Factors of 1.0 (or a hue shift of 0) are identities. All outputs are clamped
back into [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import Image, luma


@dataclass(frozen=True)
class JitterSpec:
    """Maximum fractional deltas; sampled factors lie in [max(0, 1-d), 1+d]."""

    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.05

    def __post_init__(self) -> None:
        for name in ("brightness", "contrast", "saturation", "hue"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} delta must be finite and >= 0, got {v}")
        if self.hue > 0.5:
            raise ValueError(f"hue delta must be <= 0.5, got {self.hue}")


def _check_factor(factor: float) -> None:
    if factor < 0:
        raise ValueError(f"factor must be >= 0, got {factor}")


def adjust_brightness(img: Image, factor: float) -> Image:
    """Scale every value by factor, clamped to [0, 1]."""
    _check_factor(factor)
    return Image(np.clip(img.pixels * factor, 0.0, 1.0))


def adjust_contrast(img: Image, factor: float) -> Image:
    """Blend toward the image's mean luma: v -> mu + factor * (v - mu)."""
    _check_factor(factor)
    gray = luma(img.pixels) if img.channels == 3 else img.pixels[:, :, 0]
    mu = float(gray.mean())
    return Image(np.clip(mu + factor * (img.pixels - mu), 0.0, 1.0))


def adjust_saturation(img: Image, factor: float) -> Image:
    """Blend each pixel toward its own luma; factor 0 is grayscale."""
    _check_factor(factor)
    if img.channels != 3:
        raise ValueError("saturation adjustment requires an RGB image")
    gray = luma(img.pixels)[:, :, None]
    return Image(np.clip(gray + factor * (img.pixels - gray), 0.0, 1.0))


def adjust_hue(img: Image, shift: float) -> Image:
    """Rotate hue by `shift` (fraction of the circle); S and V are preserved.

    Zero-saturation pixels are unchanged (their hue is undefined).
    """
    if img.channels != 3:
        raise ValueError("hue adjustment requires an RGB image")
    if not -0.5 <= shift <= 0.5:
        raise ValueError(f"hue shift must lie in [-0.5, 0.5], got {shift}")
    h, s, v = rgb_to_hsv(img.pixels)
    return Image(hsv_to_rgb((h + shift) % 1.0, s, v))


def rgb_to_hsv(px: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hexcone RGB -> (H, S, V); H in [0, 1), S and V in [0, 1]."""
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    maxc = np.max(px, axis=-1)
    minc = np.min(px, axis=-1)
    delta = maxc - minc
    safe_delta = np.where(delta == 0, 1.0, delta)
    h = np.select(
        [delta == 0, maxc == r, maxc == g],
        [
            np.zeros_like(maxc),
            ((g - b) / safe_delta) % 6.0,
            (b - r) / safe_delta + 2.0,
        ],
        default=(r - g) / safe_delta + 4.0,
    )
    s = np.where(maxc == 0, 0.0, delta / np.where(maxc == 0, 1.0, maxc))
    return h / 6.0, s, maxc


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Hexcone (H, S, V) -> stacked RGB array."""
    h6 = (h % 1.0) * 6.0
    sector = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    conds = [sector == i for i in range(6)]
    r = np.select(conds, [v, q, p, p, t, v])
    g = np.select(conds, [t, v, v, q, p, p])
    b = np.select(conds, [p, p, t, v, v, q])
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)
