"""Five-stage Canny edge detection.

Stages: Gaussian smoothing, Sobel gradients, non-maximum suppression,
double thresholding (relative to the per-image maximum), and hysteresis
edge tracking. All convolutions use replicate-edge borders.

Stage outputs between smoothing and thresholding are raw float planes:
gradient magnitudes exceed [0, 1], so nothing is clamped until the final
binary map.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .image import Image, luma

EDGE_NONE = 0
EDGE_WEAK = 1
EDGE_STRONG = 2

_NEIGHBORS8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]

# Offset along the quantized gradient direction, keyed by bin angle.
_BIN_OFFSETS = {0: (0, 1), 45: (1, 1), 90: (1, 0), 135: (1, -1)}

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


@dataclass(frozen=True)
class CannyParams:
    """Tunables for the full pipeline.

    Thresholds are fractions of the maximum gradient magnitude surviving
    non-maximum suppression. kernel_radius defaults to ceil(3 * sigma).
    """

    sigma: float = 1.4
    kernel_radius: int | None = None
    low_threshold: float = 0.1
    high_threshold: float = 0.2

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.kernel_radius is not None and self.kernel_radius < 0:
            raise ValueError(f"kernel_radius must be >= 0, got {self.kernel_radius}")
        if not 0 <= self.low_threshold < self.high_threshold <= 1:
            raise ValueError(
                f"need 0 <= low < high <= 1, got low={self.low_threshold}, "
                f"high={self.high_threshold}"
            )

    @property
    def radius(self) -> int:
        if self.kernel_radius is not None:
            return self.kernel_radius
        return math.ceil(3 * self.sigma)


@dataclass(frozen=True)
class GradientField:
    """Per-pixel Sobel responses: gx, gy, magnitude and atan2 direction."""

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray

    @property
    def height(self) -> int:
        return self.gx.shape[0]

    @property
    def width(self) -> int:
        return self.gx.shape[1]


@dataclass
class EdgeMap:
    """Three-state pixel classes; no Weak entries remain once finalized."""

    classes: np.ndarray  # int8 over {EDGE_NONE, EDGE_WEAK, EDGE_STRONG}
    finalized: bool = field(default=False)

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Normalized 2-D Gaussian, (2*radius+1) square."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    dx, dy = np.meshgrid(offsets, offsets)
    weights = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def convolve_plane(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolve a 2-D plane with an odd square kernel; replicate-edge borders.

    out[y, x] = sum over (dy, dx) of kernel[dy, dx] * plane[y-dy, x-dx],
    unclamped. Taps accumulate in row-major kernel order, so per-pixel
    arithmetic is order-deterministic.
    """
    plane = np.asarray(plane, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise ValueError(f"kernel must be odd square, got shape {kernel.shape}")
    r = kernel.shape[0] // 2
    h, w = plane.shape
    padded = np.pad(plane, r, mode="edge")
    out = np.zeros((h, w), dtype=np.float64)
    for ky in range(kernel.shape[0]):
        for kx in range(kernel.shape[1]):
            dy, dx = ky - r, kx - r
            out += kernel[ky, kx] * padded[r - dy : r - dy + h, r - dx : r - dx + w]
    return out


def convolve2d(img: Image, kernel: np.ndarray) -> Image:
    """Image-typed convolution; the raw result is clamped back into [0, 1]."""
    return Image.from_gray(np.clip(convolve_plane(img.plane(), kernel), 0.0, 1.0))


def _correlate3(plane: np.ndarray, kernel3: np.ndarray) -> np.ndarray:
    # Cross-correlation with a 3x3 kernel, replicate-edge borders.
    h, w = plane.shape
    padded = np.pad(plane, 1, mode="edge")
    out = np.zeros((h, w), dtype=np.float64)
    for ky in range(3):
        for kx in range(3):
            dy, dx = ky - 1, kx - 1
            out += kernel3[ky, kx] * padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return out


def sobel_plane(plane: np.ndarray) -> GradientField:
    """Sobel gx/gy (y increasing downward), magnitude and direction.

    gy is computed as the transposed x-gradient of the transposed plane;
    this is algebraically the SOBEL_Y correlation but keeps the +/- tap
    cancellation exact, so constant inputs give exactly zero gradients and
    transposition swaps gx/gy bit-for-bit.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.shape[0] < 3 or plane.shape[1] < 3:
        raise ValueError(f"image too small for Sobel: {plane.shape[1]}x{plane.shape[0]}")
    gx = _correlate3(plane, SOBEL_X)
    gy = np.ascontiguousarray(_correlate3(np.ascontiguousarray(plane.T), SOBEL_X).T)
    magnitude = np.sqrt(gx * gx + gy * gy)
    direction = np.arctan2(gy, gx)
    return GradientField(gx=gx, gy=gy, magnitude=magnitude, direction=direction)


def sobel_gradients(img: Image) -> GradientField:
    return sobel_plane(img.plane())


def quantize_direction(direction: np.ndarray) -> np.ndarray:
    """Map atan2 directions to the nearest of {0, 45, 90, 135} degrees.

    Bin boundaries sit at 22.5-degree offsets; a boundary angle belongs to
    the lower bin.
    """
    a = np.degrees(direction) % 180.0
    bins = np.zeros(a.shape, dtype=np.int16)
    bins[(a > 22.5) & (a <= 67.5)] = 45
    bins[(a > 67.5) & (a <= 112.5)] = 90
    bins[(a > 112.5) & (a <= 157.5)] = 135
    return bins


def non_max_suppression(g: GradientField) -> np.ndarray:
    """Keep local maxima along the quantized gradient direction.

    A pixel survives when it is strictly greater than its forward neighbor
    and >= its backward neighbor; the strict side breaks ties on magnitude
    plateaus so an ideal step edge thins to a single pixel. Pixels whose
    neighbor pair would leave the image are suppressed. Returns the
    surviving magnitudes as a raw plane (values are unbounded).
    """
    mag = g.magnitude
    h, w = mag.shape
    bins = quantize_direction(g.direction)
    # +inf border: an out-of-range neighbor can never be matched, so border
    # pixels along that direction are suppressed.
    padded = np.pad(mag, 1, mode="constant", constant_values=np.inf)
    out = np.zeros_like(mag)
    for angle, (dy, dx) in _BIN_OFFSETS.items():
        fwd = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        bwd = padded[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        keep = (bins == angle) & (mag > fwd) & (mag >= bwd)
        out[keep] = mag[keep]
    return out


def double_threshold(nms: np.ndarray, low: float, high: float) -> EdgeMap:
    """Classify pixels as strong/weak/none using fractions of the maximum.

    pixel >= high*max -> strong; low*max <= pixel < high*max -> weak.
    An all-zero input yields an all-none map.
    """
    if low >= high:
        raise ValueError(f"need low < high, got low={low}, high={high}")
    nms = np.asarray(nms, dtype=np.float64)
    classes = np.zeros(nms.shape, dtype=np.int8)
    peak = float(nms.max())
    if peak <= 0.0:
        return EdgeMap(classes=classes)
    classes[nms >= low * peak] = EDGE_WEAK
    classes[nms >= high * peak] = EDGE_STRONG
    return EdgeMap(classes=classes)


def hysteresis_link(em: EdgeMap) -> EdgeMap:
    """Promote weak pixels 8-connected to strong seeds; demote the rest.

    Breadth-first flood fill from every strong pixel through weak pixels.
    """
    if em.finalized:
        raise ValueError("edge map is already finalized")
    classes = em.classes
    h, w = classes.shape
    strong = classes == EDGE_STRONG
    weak = classes == EDGE_WEAK
    reached = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy, dx in _NEIGHBORS8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not reached[ny, nx]:
                reached[ny, nx] = True
                queue.append((ny, nx))
    out = np.where(reached, EDGE_STRONG, EDGE_NONE).astype(np.int8)
    return EdgeMap(classes=out, finalized=True)


def canny(img: Image, params: CannyParams = CannyParams()) -> Image:
    """Run the full pipeline; returns a binary (0/1) single-channel image."""
    plane = luma(img.pixels) if img.channels == 3 else img.plane()
    if plane.shape[0] < 3 or plane.shape[1] < 3:
        raise ValueError(f"image too small for Canny: {plane.shape[1]}x{plane.shape[0]}")
    kernel = gaussian_kernel(params.sigma, params.radius)
    smoothed = convolve_plane(plane, kernel)
    nms = non_max_suppression(sobel_plane(smoothed))
    em = hysteresis_link(double_threshold(nms, params.low_threshold, params.high_threshold))
    return Image.from_gray((em.classes == EDGE_STRONG).astype(np.float64))
