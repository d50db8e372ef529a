"""Pixel buffer representation, color conversion and image file I/O.

Images are immutable float64 arrays of shape (height, width, channels) with
per-channel values in [0, 1]; channels is 1 (grayscale) or 3 (RGB). An 8-bit
source value v maps to v / 255 on load.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

log = logging.getLogger(__name__)

# BT.601 luma weights (red, green, blue)
LUMA_R = 0.299
LUMA_G = 0.587

# Values this far past [0, 1] are treated as interpolation roundoff and clipped.
_RANGE_SLACK = 1e-9


class UnsupportedFormatError(Exception):
    """File is not a PNG or JPEG, or uses an unsupported pixel layout."""


class CorruptImageError(Exception):
    """File looks like a supported image but cannot be decoded."""


@dataclass(frozen=True)
class Image:
    """Immutable (H, W, C) float64 pixel buffer with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image dimensions must be positive, got {px.shape[:2]}")
        lo, hi = float(px.min()), float(px.max())
        if lo < -_RANGE_SLACK or hi > 1.0 + _RANGE_SLACK:
            raise ValueError(f"pixel values out of [0, 1]: min={lo}, max={hi}")
        if lo < 0.0 or hi > 1.0:
            px = np.clip(px, 0.0, 1.0)
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @classmethod
    def from_gray(cls, plane: np.ndarray) -> "Image":
        """Wrap a 2-D array as a single-channel image."""
        return cls(np.asarray(plane, dtype=np.float64)[:, :, None])

    def plane(self) -> np.ndarray:
        """2-D view of a grayscale image."""
        if self.channels != 1:
            raise ValueError("plane() requires a single-channel image")
        return self.pixels[:, :, 0]

    def as_rgb(self) -> "Image":
        """Replicate a grayscale image to 3 identical channels (RGB no-op)."""
        if self.channels == 3:
            return self
        return Image(np.repeat(self.pixels, 3, axis=2))


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned pixel rectangle; bounds are checked when applied."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValueError(f"rect offsets must be >= 0, got ({self.x}, {self.y})")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"rect size must be positive, got {self.w}x{self.h}")

    def check_within(self, img: Image) -> None:
        if self.x + self.w > img.width or self.y + self.h > img.height:
            raise ValueError(
                f"rect {self} exceeds image bounds {img.width}x{img.height}"
            )


def luma(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an (..., 3) array.

    Computed as b + 0.299*(r-b) + 0.587*(g-b), which equals
    0.299r + 0.587g + 0.114b and is exact when r == g == b.
    """
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    return b + LUMA_R * (r - b) + LUMA_G * (g - b)


def to_grayscale(img: Image) -> Image:
    """Convert RGB to single-channel grayscale using BT.601 luma."""
    if img.channels != 3:
        raise ValueError("image is already grayscale")
    return Image.from_gray(luma(img.pixels))


def load_image(path: str | Path) -> Image:
    """Load a PNG or JPEG file into a normalized [0, 1] image."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        with PILImage.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise UnsupportedFormatError(
                    f"{path}: expected PNG or JPEG, got {im.format}"
                )
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise UnsupportedFormatError(f"{path}: >8-bit images are unsupported")
            if im.mode in ("RGBA", "LA", "PA"):
                log.warning("%s: discarding alpha channel", path)
                im = im.convert("RGB" if im.mode != "LA" else "L")
            elif im.mode == "P":
                im = im.convert("RGB")
            elif im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a recognized image file") from exc
    except OSError as exc:
        raise CorruptImageError(f"{path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return Image(arr / 255.0)


def save_image(img: Image, path: str | Path) -> None:
    """Write an image as 8-bit PNG or JPEG (chosen by extension)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        fmt = "PNG"
    elif suffix in (".jpg", ".jpeg"):
        fmt = "JPEG"
    else:
        raise UnsupportedFormatError(f"{path}: unsupported extension {suffix!r}")
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil = PILImage.fromarray(data[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(data, mode="RGB")
    pil.save(path, format=fmt)
