from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from earid.image import Image, save_image


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_image(rng, h: int, w: int, channels: int = 3) -> Image:
    return Image(rng.random((h, w, channels)))


def write_dataset_tree(
    root: Path, subjects: int, per_subject: int, size: int = 8, seed: int = 0
) -> Path:
    """Tiny per-subject-directory tree of random PNGs."""
    gen = np.random.default_rng(seed)
    for s in range(subjects):
        d = root / f"subject{s:03d}"
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_subject):
            save_image(Image(gen.random((size, size, 3))), d / f"img{i:03d}.png")
    return root
