"""Geometric image transforms: zoom-crop, resize, affine and perspective warps.

All warps are inverse-mapped: for every output pixel the source location is
computed from the matrix and sampled bilinearly, so no holes appear. Matrices
map output coordinates (x, y, 1) to source coordinates. Resampling uses the
half-pixel-center convention: source x = (x + 0.5) * src_w / dst_w - 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import Image, PixelRect

# Default zoom for 492x702 captures: margins back-solved so the center crop
# is exactly 320x490, then resized 1:1.
AMI_SOURCE_SIZE = (492, 702)
AMI_ZOOM_TARGET = (320, 490)


@dataclass(frozen=True)
class ZoomSpec:
    """Symmetric center crop (fractional margins per side) plus resize."""

    target_w: int
    target_h: int
    margin_x: float
    margin_y: float

    def __post_init__(self) -> None:
        if self.target_w <= 0 or self.target_h <= 0:
            raise ValueError(f"degenerate target {self.target_w}x{self.target_h}")
        if not (0 <= self.margin_x < 0.5 and 0 <= self.margin_y < 0.5):
            raise ValueError(
                f"margins must lie in [0, 0.5), got ({self.margin_x}, {self.margin_y})"
            )

    @classmethod
    def default_ami(cls) -> "ZoomSpec":
        (sw, sh), (tw, th) = AMI_SOURCE_SIZE, AMI_ZOOM_TARGET
        return cls(
            target_w=tw,
            target_h=th,
            margin_x=(1.0 - tw / sw) / 2.0,
            margin_y=(1.0 - th / sh) / 2.0,
        )


def _sample_bilinear(
    px: np.ndarray, sx: np.ndarray, sy: np.ndarray, fill: float | None
) -> np.ndarray:
    """Bilinear gather of (H, W, C) pixels at fractional (sx, sy) grids.

    fill=None means the coordinates are already guaranteed in bounds;
    otherwise samples outside [0, W-1] x [0, H-1] take the fill value.
    """
    h, w = px.shape[:2]
    if fill is None:
        sxc, syc = sx, sy
    else:
        # Slack absorbs roundoff that pushes exact-boundary samples epsilon
        # outside the rectangle (e.g. quarter-turn rotations).
        eps = 1e-9
        inside = (sx >= -eps) & (sx <= w - 1 + eps) & (sy >= -eps) & (sy <= h - 1 + eps)
        sxc = np.clip(sx, 0, w - 1)
        syc = np.clip(sy, 0, h - 1)
    x0 = np.floor(sxc).astype(np.intp)
    y0 = np.floor(syc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sxc - x0)[..., None]
    fy = (syc - y0)[..., None]
    out = (
        px[y0, x0] * (1.0 - fx) * (1.0 - fy)
        + px[y0, x1] * fx * (1.0 - fy)
        + px[y1, x0] * (1.0 - fx) * fy
        + px[y1, x1] * fx * fy
    )
    if fill is not None:
        out = np.where(inside[..., None], out, fill)
    return out


def resize_bilinear(img: Image, w: int, h: int) -> Image:
    """Resize with half-pixel-center alignment; coordinates clamp at borders."""
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate target {w}x{h}")
    xs = (np.arange(w, dtype=np.float64) + 0.5) * (img.width / w) - 0.5
    ys = (np.arange(h, dtype=np.float64) + 0.5) * (img.height / h) - 0.5
    np.clip(xs, 0, img.width - 1, out=xs)
    np.clip(ys, 0, img.height - 1, out=ys)
    sx, sy = np.meshgrid(xs, ys)
    return Image(_sample_bilinear(img.pixels, sx, sy, fill=None))


def zoom_crop(img: Image, spec: ZoomSpec) -> Image:
    """Center-crop by the spec margins, then resize to the spec target."""
    x0 = int(round(spec.margin_x * img.width))
    y0 = int(round(spec.margin_y * img.height))
    crop_w = img.width - 2 * x0
    crop_h = img.height - 2 * y0
    if crop_w <= 0 or crop_h <= 0:
        raise ValueError(f"margins leave an empty crop of {crop_w}x{crop_h}")
    cropped = Image(img.pixels[y0 : y0 + crop_h, x0 : x0 + crop_w])
    if crop_w == spec.target_w and crop_h == spec.target_h:
        return cropped
    return resize_bilinear(cropped, spec.target_w, spec.target_h)


def _check_affine(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (2, 3):
        raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-12:
        raise ValueError("affine matrix is singular")
    return m


def warp_affine(
    img: Image, m: np.ndarray, fill: float = 0.0, out_size: tuple[int, int] | None = None
) -> Image:
    """Inverse-mapped affine warp.

    The output has the input's dimensions unless out_size=(w, h) is given
    (needed when a crop-resize matrix targets a different size).
    """
    m = _check_affine(m)
    if not 0 <= fill <= 1:
        raise ValueError(f"fill must lie in [0, 1], got {fill}")
    out_w, out_h = out_size if out_size is not None else (img.width, img.height)
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    sx = m[0, 0] * gx + m[0, 1] * gy + m[0, 2]
    sy = m[1, 0] * gx + m[1, 1] * gy + m[1, 2]
    return Image(_sample_bilinear(img.pixels, sx, sy, fill=fill))


def warp_perspective(img: Image, m: np.ndarray, fill: float = 0.0) -> Image:
    """Inverse-mapped homography warp; near-zero denominators take fill."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"perspective matrix must be 3x3, got {m.shape}")
    if abs(np.linalg.det(m)) < 1e-12:
        raise ValueError("perspective matrix is singular")
    if not 0 <= fill <= 1:
        raise ValueError(f"fill must lie in [0, 1], got {fill}")
    xs = np.arange(img.width, dtype=np.float64)
    ys = np.arange(img.height, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    u = m[0, 0] * gx + m[0, 1] * gy + m[0, 2]
    v = m[1, 0] * gx + m[1, 1] * gy + m[1, 2]
    d = m[2, 0] * gx + m[2, 1] * gy + m[2, 2]
    bad = d <= 1e-12
    safe = np.where(bad, 1.0, d)
    sx = u / safe
    sy = v / safe
    # Degenerate-denominator pixels are forced out of range so they take fill.
    sx = np.where(bad, -1e9, sx)
    out = _sample_bilinear(img.pixels, sx, sy, fill=fill)
    return Image(out)


def make_rotation(angle_deg: float, cx: float, cy: float) -> np.ndarray:
    """Affine rotating content counterclockwise (as displayed) about (cx, cy)."""
    if not math.isfinite(angle_deg):
        raise ValueError(f"angle must be finite, got {angle_deg}")
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array(
        [
            [c, -s, cx - c * cx + s * cy],
            [s, c, cy - s * cx - c * cy],
        ]
    )


def make_flip_h(width: int) -> np.ndarray:
    """Horizontal mirror."""
    return np.array([[-1.0, 0.0, float(width - 1)], [0.0, 1.0, 0.0]])


def make_crop_resize(rect: PixelRect, out_w: int, out_h: int) -> np.ndarray:
    """Crop rect then resize to out_w x out_h, as one inverse-mapped affine."""
    if out_w <= 0 or out_h <= 0:
        raise ValueError(f"degenerate target {out_w}x{out_h}")
    ax = rect.w / out_w
    ay = rect.h / out_h
    return np.array(
        [
            [ax, 0.0, rect.x + 0.5 * ax - 0.5],
            [0.0, ay, rect.y + 0.5 * ay - 0.5],
        ]
    )


def make_perspective(src_corners: np.ndarray, width: int, height: int) -> np.ndarray:
    """Homography sending the output corner pixels to the given source corners.

    src_corners is 4x2 (x, y) in order top-left, top-right, bottom-right,
    bottom-left; the output corners are the pixel centers (0, 0),
    (width-1, 0), (width-1, height-1), (0, height-1).
    """
    src = np.asarray(src_corners, dtype=np.float64)
    if src.shape != (4, 2):
        raise ValueError(f"src_corners must be 4x2, got {src.shape}")
    dst = np.array(
        [[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]],
        dtype=np.float64,
    )
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(dst, src)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        b[2 * i] = u
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i + 1] = v
    coeffs = np.linalg.solve(a, b)
    return np.append(coeffs, 1.0).reshape(3, 3)
