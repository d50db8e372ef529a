"""Dataset manifests: directory scanning, stratified splitting, persistence.

A manifest is the unit every pipeline stage consumes: a list of (image path,
subject label, split, provenance) records. Manifest JSON stores paths
relative to the manifest file's directory.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

log = logging.getLogger(__name__)

MANIFEST_VERSION = "manifest_v1"
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"
SPLIT_UNSPLIT = "unsplit"
SPLITS = (SPLIT_TRAIN, SPLIT_TEST, SPLIT_UNSPLIT)

PROV_ORIGINAL = "original"
PROV_AUGMENTED = "augmented"
PROV_EDGE_MAP = "edge_map"
PROVENANCES = (PROV_ORIGINAL, PROV_AUGMENTED, PROV_EDGE_MAP)

LAYOUT_SUBJECT_DIRS = "per-subject-dirs"
LAYOUT_FILENAME_PATTERN = "filename-pattern"


class DatasetError(Exception):
    """Dataset tree cannot be turned into a usable manifest."""


class ManifestError(Exception):
    """Manifest file is malformed."""


class SchemaVersionError(ManifestError):
    """Manifest file uses an unknown schema version."""


@dataclass(frozen=True)
class Record:
    """One image in a manifest; chain is the serialized augmentation recipe."""

    id: str
    path: str
    label: str
    split: str = SPLIT_UNSPLIT
    provenance: str = PROV_ORIGINAL
    chain: dict | None = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if (self.provenance == PROV_AUGMENTED) != (self.chain is not None):
            raise ValueError("augmented records carry a chain; others must not")


@dataclass
class DatasetManifest:
    dataset_name: str
    records: list[Record]
    created_with_seed: int | None = None

    def __post_init__(self) -> None:
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique")

    @property
    def class_count(self) -> int:
        return len({r.label for r in self.records})

    def labels(self) -> list[str]:
        return sorted({r.label for r in self.records})

    def subset(self, split: str) -> list[Record]:
        return [r for r in self.records if r.split == split]


@dataclass(frozen=True)
class DatasetProfile:
    """How to read a dataset tree and whether zooming applies to it."""

    layout: str = LAYOUT_SUBJECT_DIRS
    label_pattern: str | None = None
    expected_resolution: tuple[int, int] | None = None  # (width, height)
    zoom_enabled: bool = True

    def __post_init__(self) -> None:
        if self.layout not in (LAYOUT_SUBJECT_DIRS, LAYOUT_FILENAME_PATTERN):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == LAYOUT_FILENAME_PATTERN:
            if not self.label_pattern:
                raise ValueError("filename-pattern layout requires label_pattern")
            if re.compile(self.label_pattern).groups != 1:
                raise ValueError("label_pattern must have exactly one capture group")


def _is_image(path: Path) -> bool:
    return path.suffix.lower() in IMAGE_EXTENSIONS


def scan_dataset(root: str | Path, profile: DatasetProfile) -> DatasetManifest:
    """Build a manifest from a dataset tree; records are sorted by path."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} does not exist")
    entries: list[tuple[Path, str]] = []
    if profile.layout == LAYOUT_SUBJECT_DIRS:
        for subject_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            for f in sorted(subject_dir.rglob("*")):
                if f.is_file() and _is_image(f):
                    entries.append((f, subject_dir.name))
    else:
        pattern = re.compile(profile.label_pattern)
        for f in sorted(root.rglob("*")):
            if f.is_file() and _is_image(f):
                m = pattern.search(f.name)
                if m is None:
                    raise DatasetError(f"{f}: filename does not match label pattern")
                entries.append((f, m.group(1)))
    if not entries:
        raise DatasetError(f"no images found under {root}")
    entries.sort(key=lambda e: str(e[0]))
    records = [
        Record(id=f.relative_to(root).as_posix(), path=str(f.resolve()), label=label)
        for f, label in entries
    ]
    if profile.expected_resolution is not None:
        _warn_resolution_mismatches(records, profile.expected_resolution)
    return DatasetManifest(dataset_name=root.name, records=records)


def _warn_resolution_mismatches(records: list[Record], expected: tuple[int, int]) -> None:
    mismatched = []
    for r in records:
        try:
            with PILImage.open(r.path) as im:
                size = im.size
        except OSError:
            raise DatasetError(f"{r.path}: unreadable image file")
        if size != tuple(expected):
            mismatched.append((r.path, size))
    if mismatched:
        sample = ", ".join(f"{p} is {w}x{h}" for p, (w, h) in mismatched[:5])
        log.warning(
            "%d of %d images differ from the expected resolution %dx%d (e.g. %s)",
            len(mismatched), len(records), expected[0], expected[1], sample,
        )


def split_manifest(
    m: DatasetManifest, test_fraction: float, seed: int
) -> DatasetManifest:
    """Stratified split: per label, ceil(test_fraction * n) records go to TEST."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    by_label: dict[str, list[int]] = {}
    for i, r in enumerate(m.records):
        by_label.setdefault(r.label, []).append(i)
    singletons = sorted(l for l, idx in by_label.items() if len(idx) < 2)
    if singletons:
        raise DatasetError(
            f"labels with a single record cannot be split: {singletons[:5]}"
        )
    rng = np.random.default_rng(seed)
    assignment = [SPLIT_TRAIN] * len(m.records)
    for label in sorted(by_label):
        indices = sorted(by_label[label], key=lambda i: m.records[i].id)
        # 1e-9 slack so float roundoff in fraction * n cannot bump the ceil.
        n_test = math.ceil(test_fraction * len(indices) - 1e-9)
        order = rng.permutation(len(indices))
        for j in order[:n_test]:
            assignment[indices[j]] = SPLIT_TEST
    records = [replace(r, split=s) for r, s in zip(m.records, assignment)]
    return DatasetManifest(
        dataset_name=m.dataset_name, records=records, created_with_seed=seed
    )


def write_manifest(m: DatasetManifest, path: str | Path) -> None:
    """Serialize to JSON; image paths are stored relative to the manifest."""
    path = Path(path)
    base = path.resolve().parent
    recs = []
    for r in m.records:
        entry = {
            "id": r.id,
            "path": _relativize(r.path, base),
            "label": r.label,
            "split": r.split,
            "provenance": r.provenance,
        }
        if r.chain is not None:
            entry["chain"] = r.chain
        recs.append(entry)
    doc = {
        "version": MANIFEST_VERSION,
        "dataset_name": m.dataset_name,
        "class_count": m.class_count,
        "records": recs,
    }
    if m.created_with_seed is not None:
        doc["seed"] = m.created_with_seed
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _relativize(target: str, base: Path) -> str:
    try:
        import os

        return Path(os.path.relpath(Path(target).resolve(), base)).as_posix()
    except ValueError:  # different drive on Windows
        return Path(target).resolve().as_posix()


def read_manifest(path: str | Path) -> DatasetManifest:
    """Parse a manifest file; resolves stored paths against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ManifestError(f"{path}: missing version field")
    if doc["version"] != MANIFEST_VERSION:
        raise SchemaVersionError(
            f"{path}: expected {MANIFEST_VERSION}, got {doc['version']!r}"
        )
    for key in ("dataset_name", "records", "class_count"):
        if key not in doc:
            raise ManifestError(f"{path}: missing {key!r} field")
    base = path.resolve().parent
    records = []
    try:
        for entry in doc["records"]:
            records.append(
                Record(
                    id=entry["id"],
                    path=str((base / entry["path"]).resolve()),
                    label=entry["label"],
                    split=entry["split"],
                    provenance=entry["provenance"],
                    chain=entry.get("chain"),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{path}: bad record ({exc})") from exc
    manifest = DatasetManifest(
        dataset_name=doc["dataset_name"],
        records=records,
        created_with_seed=doc.get("seed"),
    )
    if manifest.class_count != doc["class_count"]:
        raise ManifestError(
            f"{path}: class_count {doc['class_count']} does not match "
            f"{manifest.class_count} distinct labels"
        )
    return manifest
