from __future__ import annotations

import numpy as np
import pytest

from earid.augment import (
    KIND_BRIGHTNESS,
    KIND_FLIP_H,
    KIND_ROTATE,
    AugmentConfig,
    TransformChain,
    TransformStep,
    apply_chain,
    expand_dataset,
    sample_chain,
)
from earid.dataset import DatasetProfile, scan_dataset, split_manifest
from earid.geometry import make_rotation, warp_affine
from earid.image import load_image
from earid.photometric import JitterSpec, adjust_brightness

from conftest import random_image, write_dataset_tree


def _degenerate_config() -> AugmentConfig:
    return AugmentConfig(
        jitter=JitterSpec(brightness=0, contrast=0, saturation=0, hue=0),
        max_rotation=0.0,
        flip_prob=0.0,
        crop_prob=0.0,
        perspective_prob=0.0,
        grayscale_prob=0.0,
    )


class TestSampleChain:
    def test_deterministic(self):
        cfg = AugmentConfig()
        a = sample_chain(cfg, 123, "img1")
        b = sample_chain(cfg, 123, "img1")
        assert a == b

    def test_source_id_matters(self):
        cfg = AugmentConfig()
        assert sample_chain(cfg, 123, "img1") != sample_chain(cfg, 123, "img2")

    def test_ten_chains_mostly_distinct(self):
        cfg = AugmentConfig()
        chains = [sample_chain(cfg, seed, "img") for seed in range(10)]
        distinct = {tuple((s.kind, tuple(sorted(s.params.items()))) for s in c.steps
                     if not isinstance(next(iter(s.params.values()), 0.0), list))
                    for c in chains}
        assert len({repr(c.steps) for c in chains}) >= 9

    def test_degenerate_config_is_identity(self, rng):
        chain = sample_chain(_degenerate_config(), 5, "x")
        img = random_image(rng, 12, 12)
        out = apply_chain(img, chain)
        assert np.allclose(out.pixels, img.pixels, atol=1e-6)

    def test_rotation_always_present(self):
        chain = sample_chain(AugmentConfig(), 7, "a")
        assert chain.steps[0].kind == KIND_ROTATE

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AugmentConfig(flip_prob=1.5)
        with pytest.raises(ValueError):
            AugmentConfig(crop_scale_range=(1.0, 0.8))
        with pytest.raises(ValueError):
            AugmentConfig(chains_per_image=-1)


class TestApplyChain:
    def test_empty_chain_identity(self, rng):
        img = random_image(rng, 8, 8)
        chain = TransformChain(steps=(), seed=0, source_id="s")
        assert np.array_equal(apply_chain(img, chain).pixels, img.pixels)

    def test_double_flip_identity(self, rng):
        img = random_image(rng, 8, 8)
        chain = TransformChain(
            steps=(TransformStep(KIND_FLIP_H), TransformStep(KIND_FLIP_H)),
            seed=0,
            source_id="s",
        )
        assert np.allclose(apply_chain(img, chain).pixels, img.pixels, atol=1e-6)

    def test_matches_manual_composition(self, rng):
        img = random_image(rng, 10, 10)
        chain = TransformChain(
            steps=(
                TransformStep(KIND_ROTATE, {"angle_deg": 10.0}),
                TransformStep(KIND_BRIGHTNESS, {"factor": 1.1}),
            ),
            seed=0,
            source_id="s",
        )
        manual = adjust_brightness(
            warp_affine(img, make_rotation(10.0, 4.5, 4.5)), 1.1
        )
        assert np.array_equal(apply_chain(img, chain).pixels, manual.pixels)

    def test_preserves_dimensions(self, rng):
        img = random_image(rng, 14, 9)
        chain = sample_chain(AugmentConfig(), 3, "z")
        out = apply_chain(img, chain)
        assert (out.width, out.height) == (img.width, img.height)

    def test_grayscale_promoted_for_color_steps(self, rng):
        img = random_image(rng, 6, 6, channels=1)
        chain = sample_chain(AugmentConfig(), 3, "z")
        out = apply_chain(img, chain)
        assert out.channels == 3

    def test_json_round_trip_bit_exact(self):
        chain = sample_chain(AugmentConfig(), 99, "some/img.png")
        back = TransformChain.from_json(chain.to_json())
        assert back == chain


class TestExpandDataset:
    @pytest.fixture
    def split_tree(self, tmp_path):
        write_dataset_tree(tmp_path / "data", subjects=2, per_subject=3, size=10)
        manifest = scan_dataset(tmp_path / "data", DatasetProfile())
        return split_manifest(manifest, test_fraction=0.34, seed=5)

    def test_expansion_arithmetic(self, split_tree, tmp_path):
        cfg = AugmentConfig(chains_per_image=4)
        n_train = len(split_tree.subset("train"))
        n_test = len(split_tree.subset("test"))
        out = expand_dataset(split_tree, cfg, 42, tmp_path / "aug")
        assert len(out.subset("train")) == n_train * 5
        assert len(out.subset("test")) == n_test
        assert all(r.provenance != "augmented" for r in out.subset("test"))

    def test_labels_preserved(self, split_tree, tmp_path):
        out = expand_dataset(split_tree, AugmentConfig(chains_per_image=2), 1, tmp_path / "aug")
        by_id = {r.id: r for r in split_tree.records}
        for r in out.records:
            if r.provenance == "augmented":
                assert r.label == by_id[r.chain["source_id"]].label

    def test_zero_chains_identity(self, split_tree, tmp_path):
        out = expand_dataset(split_tree, AugmentConfig(chains_per_image=0), 9, tmp_path / "aug")
        assert out.records == split_tree.records

    def test_replayable_bit_exact(self, split_tree, tmp_path):
        out = expand_dataset(split_tree, AugmentConfig(chains_per_image=2), 7, tmp_path / "aug")
        from earid.image import save_image

        for r in out.records:
            if r.provenance != "augmented":
                continue
            src = next(s for s in split_tree.records if s.id == r.chain["source_id"])
            replay = apply_chain(
                load_image(src.path).as_rgb(), TransformChain.from_json(r.chain)
            )
            replay_path = tmp_path / "replay.png"
            save_image(replay, replay_path)
            assert replay_path.read_bytes() == open(r.path, "rb").read()

    def test_deterministic_files(self, split_tree, tmp_path):
        cfg = AugmentConfig(chains_per_image=2)
        a = expand_dataset(split_tree, cfg, 11, tmp_path / "a")
        b = expand_dataset(split_tree, cfg, 11, tmp_path / "b")
        aug_a = [r for r in a.records if r.provenance == "augmented"]
        aug_b = [r for r in b.records if r.provenance == "augmented"]
        assert [r.id for r in aug_a] == [r.id for r in aug_b]
        for ra, rb in zip(aug_a, aug_b):
            assert open(ra.path, "rb").read() == open(rb.path, "rb").read()
