"""Seeded sampling and replay of augmentation chains.

A chain is a fully resolved list of transform steps: every random draw is
frozen into the step parameters, so applying a chain twice to the same image
is bit-identical. Geometric steps come first, then photometric ones. Spatial
parameters are stored as fractions of the image size, which keeps a chain
applicable to any image while remaining a pure function of its parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import photometric
from .dataset import (
    PROV_AUGMENTED,
    SPLIT_TRAIN,
    DatasetManifest,
    Record,
)
from .geometry import (
    make_crop_resize,
    make_flip_h,
    make_perspective,
    make_rotation,
    warp_affine,
    warp_perspective,
)
from .image import Image, PixelRect, load_image, save_image, to_grayscale
from .photometric import JitterSpec
from .seeds import mix_seed

KIND_ROTATE = "rotate"
KIND_FLIP_H = "flip_h"
KIND_CROP_RESIZE = "crop_resize"
KIND_AFFINE = "affine"
KIND_PERSPECTIVE = "perspective"
KIND_BRIGHTNESS = "brightness"
KIND_CONTRAST = "contrast"
KIND_SATURATION = "saturation"
KIND_HUE = "hue"
KIND_GRAYSCALE3 = "grayscale3"

_RGB_ONLY_KINDS = (KIND_SATURATION, KIND_HUE, KIND_GRAYSCALE3)


@dataclass(frozen=True)
class TransformStep:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TransformChain:
    steps: tuple[TransformStep, ...]
    seed: int
    source_id: str

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "source_id": self.source_id,
            "steps": [{"kind": s.kind, "params": s.params} for s in self.steps],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TransformChain":
        steps = tuple(
            TransformStep(kind=s["kind"], params=s.get("params", {}))
            for s in doc["steps"]
        )
        return cls(steps=steps, seed=doc["seed"], source_id=doc["source_id"])


@dataclass(frozen=True)
class AugmentConfig:
    """Sampling ranges and probabilities for one augmentation chain."""

    jitter: JitterSpec = JitterSpec()
    max_rotation: float = 15.0
    flip_prob: float = 0.5
    crop_prob: float = 0.5
    crop_scale_range: tuple[float, float] = (0.8, 1.0)
    perspective_prob: float = 0.5
    perspective_distortion: float = 0.1
    grayscale_prob: float = 0.1
    chains_per_image: int = 10

    def __post_init__(self) -> None:
        for name in ("flip_prob", "crop_prob", "perspective_prob", "grayscale_prob"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        lo, hi = self.crop_scale_range
        if not 0 < lo <= hi <= 1:
            raise ValueError(f"crop_scale_range must be ordered in (0, 1], got {lo}, {hi}")
        if self.max_rotation < 0 or self.perspective_distortion < 0:
            raise ValueError("max_rotation and perspective_distortion must be >= 0")
        if self.chains_per_image < 0:
            raise ValueError(f"chains_per_image must be >= 0, got {self.chains_per_image}")

    def to_json(self) -> dict:
        return {
            "jitter": {
                "brightness": self.jitter.brightness,
                "contrast": self.jitter.contrast,
                "saturation": self.jitter.saturation,
                "hue": self.jitter.hue,
            },
            "max_rotation": self.max_rotation,
            "flip_prob": self.flip_prob,
            "crop_prob": self.crop_prob,
            "crop_scale_range": list(self.crop_scale_range),
            "perspective_prob": self.perspective_prob,
            "perspective_distortion": self.perspective_distortion,
            "grayscale_prob": self.grayscale_prob,
            "chains_per_image": self.chains_per_image,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AugmentConfig":
        doc = dict(doc)
        jitter = JitterSpec(**doc.pop("jitter", {}))
        if "crop_scale_range" in doc:
            doc["crop_scale_range"] = tuple(doc["crop_scale_range"])
        return cls(jitter=jitter, **doc)


def _factor_range(delta: float) -> tuple[float, float]:
    return max(0.0, 1.0 - delta), 1.0 + delta


def sample_chain(cfg: AugmentConfig, rng_seed: int, source_id: str) -> TransformChain:
    """Draw one chain; a pure function of (cfg, rng_seed, source_id)."""
    rng = np.random.default_rng(mix_seed(rng_seed, source_id))
    steps: list[TransformStep] = []

    angle = float(rng.uniform(-cfg.max_rotation, cfg.max_rotation))
    steps.append(TransformStep(KIND_ROTATE, {"angle_deg": angle}))
    if rng.random() < cfg.flip_prob:
        steps.append(TransformStep(KIND_FLIP_H))
    if rng.random() < cfg.crop_prob:
        lo, hi = cfg.crop_scale_range
        steps.append(
            TransformStep(
                KIND_CROP_RESIZE,
                {
                    "scale": float(rng.uniform(lo, hi)),
                    "x_frac": float(rng.random()),
                    "y_frac": float(rng.random()),
                },
            )
        )
    if rng.random() < cfg.perspective_prob:
        d = cfg.perspective_distortion
        shifts = rng.uniform(-d, d, size=8)
        steps.append(TransformStep(KIND_PERSPECTIVE, {"corner_shifts": shifts.tolist()}))

    for kind, delta in (
        (KIND_BRIGHTNESS, cfg.jitter.brightness),
        (KIND_CONTRAST, cfg.jitter.contrast),
        (KIND_SATURATION, cfg.jitter.saturation),
    ):
        lo, hi = _factor_range(delta)
        steps.append(TransformStep(kind, {"factor": float(rng.uniform(lo, hi))}))
    steps.append(
        TransformStep(KIND_HUE, {"shift": float(rng.uniform(-cfg.jitter.hue, cfg.jitter.hue))})
    )
    if rng.random() < cfg.grayscale_prob:
        steps.append(TransformStep(KIND_GRAYSCALE3))

    return TransformChain(steps=tuple(steps), seed=rng_seed, source_id=source_id)


def _crop_rect(params: dict, width: int, height: int) -> PixelRect:
    scale = params["scale"]
    cw = max(1, int(round(scale * width)))
    ch = max(1, int(round(scale * height)))
    x0 = int(round(params["x_frac"] * (width - cw)))
    y0 = int(round(params["y_frac"] * (height - ch)))
    return PixelRect(x=x0, y=y0, w=cw, h=ch)


def _perspective_matrix(params: dict, width: int, height: int) -> np.ndarray:
    shifts = np.asarray(params["corner_shifts"], dtype=np.float64).reshape(4, 2)
    corners = np.array(
        [[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]],
        dtype=np.float64,
    )
    src = corners + shifts * np.array([width, height], dtype=np.float64)
    return make_perspective(src, width, height)


def apply_step(img: Image, step: TransformStep) -> Image:
    w, h = img.width, img.height
    k, p = step.kind, step.params
    if k == KIND_ROTATE:
        return warp_affine(img, make_rotation(p["angle_deg"], (w - 1) / 2, (h - 1) / 2))
    if k == KIND_FLIP_H:
        return warp_affine(img, make_flip_h(w))
    if k == KIND_CROP_RESIZE:
        return warp_affine(img, make_crop_resize(_crop_rect(p, w, h), w, h))
    if k == KIND_AFFINE:
        return warp_affine(img, np.asarray(p["matrix"], dtype=np.float64))
    if k == KIND_PERSPECTIVE:
        return warp_perspective(img, _perspective_matrix(p, w, h))
    if k == KIND_BRIGHTNESS:
        return photometric.adjust_brightness(img, p["factor"])
    if k == KIND_CONTRAST:
        return photometric.adjust_contrast(img, p["factor"])
    if k == KIND_SATURATION:
        return photometric.adjust_saturation(img, p["factor"])
    if k == KIND_HUE:
        return photometric.adjust_hue(img, p["shift"])
    if k == KIND_GRAYSCALE3:
        return to_grayscale(img).as_rgb()
    raise ValueError(f"unknown transform kind {k!r}")


def apply_chain(img: Image, chain: TransformChain) -> Image:
    """Apply the steps in order; output keeps the input dimensions.

    Chains are defined over RGB pixels: a grayscale input is promoted to
    3 channels first whenever the chain contains a color-dependent step.
    """
    if img.channels == 1 and any(s.kind in _RGB_ONLY_KINDS for s in chain.steps):
        img = img.as_rgb()
    for step in chain.steps:
        img = apply_step(img, step)
    return img


def expand_dataset(
    manifest: DatasetManifest,
    cfg: AugmentConfig,
    master_seed: int,
    out_dir: str | Path,
) -> DatasetManifest:
    """Write chains_per_image augmented PNGs for every TRAIN record.

    Originals are retained; TEST records are never augmented. The chain seed
    for (image, k) is mix_seed(master_seed, source_id, k), so adding images
    never reshuffles existing chains.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    augmented: list[Record] = []
    for record in manifest.records:
        if record.split != SPLIT_TRAIN or cfg.chains_per_image == 0:
            continue
        try:
            img = load_image(record.path).as_rgb()
        except Exception as exc:
            raise RuntimeError(f"augmenting {record.path} failed: {exc}") from exc
        stem = record.id.replace("/", "__")
        for k in range(cfg.chains_per_image):
            chain = sample_chain(cfg, mix_seed(master_seed, record.id, k), record.id)
            out_path = out_dir / f"{stem}.aug{k:02d}.png"
            save_image(apply_chain(img, chain), out_path)
            augmented.append(
                Record(
                    id=f"{record.id}#aug{k:02d}",
                    path=str(out_path.resolve()),
                    label=record.label,
                    split=SPLIT_TRAIN,
                    provenance=PROV_AUGMENTED,
                    chain=chain.to_json(),
                )
            )
    return DatasetManifest(
        dataset_name=manifest.dataset_name,
        records=list(manifest.records) + augmented,
        created_with_seed=manifest.created_with_seed,
    )
