"""Procedural "ear glyph" dataset for desk-scale experiments.

Each class is an elliptical contour family (outer helix ring, inner ridge,
lobe blob, tragus notch) whose geometry is drawn once per class; instances
add pose jitter (rotation, shift, scale) and lighting jitter (brightness,
illumination ramp, noise). The glyphs give the full pipeline something real
to chew on: contours for edge detection, pose variation for augmentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import Image, save_image
from .seeds import mix_seed


@dataclass(frozen=True)
class GlyphClass:
    outer_a: float
    outer_b: float
    ring_width: float
    helix_scale: float
    helix_dx: float
    helix_dy: float
    helix_width: float
    lobe_r: float
    lobe_y: float
    notch_angle: float
    notch_width: float
    tint: tuple[float, float, float]


def glyph_class(class_idx: int, seed: int = 0) -> GlyphClass:
    rng = np.random.default_rng(mix_seed(seed, "class", class_idx))
    tint_base = rng.uniform(0.85, 1.0, size=3)
    tint_base[0] = 1.0  # warm cast, red channel dominant
    return GlyphClass(
        outer_a=float(rng.uniform(0.26, 0.34)),
        outer_b=float(rng.uniform(0.36, 0.44)),
        ring_width=float(rng.uniform(0.032, 0.048)),
        helix_scale=float(rng.uniform(0.54, 0.68)),
        helix_dx=float(rng.uniform(-0.05, 0.05)),
        helix_dy=float(rng.uniform(-0.05, 0.05)),
        helix_width=float(rng.uniform(0.022, 0.036)),
        lobe_r=float(rng.uniform(0.06, 0.10)),
        lobe_y=float(rng.uniform(0.60, 0.78)),
        notch_angle=float(rng.uniform(140.0, 220.0)),
        notch_width=float(rng.uniform(18.0, 42.0)),
        tint=tuple(float(t) for t in tint_base),
    )


def _ring(u: np.ndarray, v: np.ndarray, a: float, b: float, width: float) -> np.ndarray:
    r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    return np.exp(-(((r - 1.0) / width) ** 2))


def render_glyph(class_idx: int, instance_idx: int, size: int = 64, seed: int = 0) -> Image:
    """Render one jittered instance of a class glyph as an RGB image."""
    spec = glyph_class(class_idx, seed)
    rng = np.random.default_rng(mix_seed(seed, "instance", class_idx, instance_idx))

    rot = math.radians(rng.uniform(-25.0, 25.0))
    shift_x = rng.uniform(-0.08, 0.08)
    shift_y = rng.uniform(-0.08, 0.08)
    scale = rng.uniform(0.85, 1.15)

    coords = (np.arange(size) + 0.5) / size - 0.5
    gx, gy = np.meshgrid(coords, coords)
    c, s = math.cos(rot), math.sin(rot)
    u = (c * (gx - shift_x) + s * (gy - shift_y)) / scale
    v = (-s * (gx - shift_x) + c * (gy - shift_y)) / scale

    canvas = np.full((size, size), rng.uniform(0.06, 0.18))

    outer = _ring(u, v, spec.outer_a, spec.outer_b, spec.ring_width)
    theta = np.degrees(np.arctan2(v, u)) % 360.0
    gap = np.minimum(np.abs(theta - spec.notch_angle), 360.0 - np.abs(theta - spec.notch_angle))
    outer = outer * np.clip(gap / spec.notch_width, 0.0, 1.0)
    canvas += 0.65 * outer

    helix = _ring(
        u - spec.helix_dx,
        v - spec.helix_dy,
        spec.outer_a * spec.helix_scale,
        spec.outer_b * spec.helix_scale,
        spec.helix_width,
    )
    canvas += 0.50 * helix

    lobe_d2 = (u / spec.lobe_r) ** 2 + ((v - spec.outer_b * spec.lobe_y) / spec.lobe_r) ** 2
    canvas += 0.55 * np.exp(-lobe_d2)

    # Illumination ramp in a random direction, then brightness and sensor noise.
    ramp_dir = rng.uniform(0.0, 2.0 * math.pi)
    ramp = 1.0 + rng.uniform(0.0, 0.4) * (
        gx * math.cos(ramp_dir) + gy * math.sin(ramp_dir)
    )
    canvas = canvas * ramp * rng.uniform(0.70, 1.15)
    canvas = canvas + rng.normal(0.0, rng.uniform(0.02, 0.05), size=canvas.shape)
    canvas = np.clip(canvas, 0.0, 1.0)

    rgb = np.stack([canvas * t for t in spec.tint], axis=-1)
    return Image(np.clip(rgb, 0.0, 1.0))


def generate_glyph_dataset(
    root: str | Path,
    classes: int = 10,
    per_class: int = 30,
    size: int = 64,
    seed: int = 0,
) -> int:
    """Write a per-subject-directory tree of glyph PNGs; returns image count."""
    root = Path(root)
    count = 0
    for k in range(classes):
        subject_dir = root / f"subject_{k:03d}"
        subject_dir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            save_image(render_glyph(k, i, size=size, seed=seed), subject_dir / f"img_{i:03d}.png")
            count += 1
    return count
