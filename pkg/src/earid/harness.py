"""Experiment harness: materialize the four conditions and run train/eval.

Conditions:
  BM  - records pass through untouched (resizing happens inside training)
  PP  - zoom-crop (when the profile enables zoom) then edge detection
  AZ  - zoom-crop then augmentation of the TRAIN split
  CES - zoom-crop, edge detection, then augmentation of the TRAIN split

Per-image preprocessing (zoom/canny) applies to train and test alike;
augmentation never touches TEST records. Every condition/repeat cell derives
its own seed from the master seed, so cells are independent of execution
order, and all conditions within one repeat share the same split seed so
comparisons are paired.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .augment import AugmentConfig, expand_dataset
from .canny import CannyParams, canny
from .classifier import TrainConfig, evaluate, save_model, train
from .dataset import (
    PROV_EDGE_MAP,
    SPLIT_TRAIN,
    DatasetManifest,
    DatasetProfile,
    Record,
    scan_dataset,
    split_manifest,
    write_manifest,
)
from .geometry import ZoomSpec, zoom_crop
from .image import load_image, save_image
from .report import ExperimentReport, ReportRow, emit_report, render_report_figure
from .seeds import mix_seed

log = logging.getLogger(__name__)

CONFIG_VERSION = "expcfg_v1"

COND_BM = "BM"
COND_PP = "PP"
COND_AZ = "AZ"
COND_CES = "CES"
CONDITIONS = (COND_BM, COND_PP, COND_AZ, COND_CES)

_ZOOMED = {COND_PP, COND_AZ, COND_CES}
_EDGED = {COND_PP, COND_CES}
_AUGMENTED = {COND_AZ, COND_CES}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_root: str
    profile: DatasetProfile = DatasetProfile()
    conditions: tuple[str, ...] = CONDITIONS
    canny: CannyParams = CannyParams()
    zoom: ZoomSpec = ZoomSpec.default_ami()
    augment: AugmentConfig = AugmentConfig()
    train: TrainConfig = TrainConfig()
    conv_channels: tuple[int, ...] = (8, 16, 32)
    test_fraction: float = 0.2
    master_seed: int = 0
    repeats: int = 3
    output_dir: str = "experiment_out"
    timing: bool = False  # real wall times make report files non-reproducible

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if not 0 < self.test_fraction < 1:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        unknown = [c for c in self.conditions if c not in CONDITIONS]
        if unknown:
            raise ValueError(f"unknown conditions {unknown}; pick from {CONDITIONS}")

    def to_json(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "dataset_root": self.dataset_root,
            "profile": {
                "layout": self.profile.layout,
                "label_pattern": self.profile.label_pattern,
                "expected_resolution": (
                    list(self.profile.expected_resolution)
                    if self.profile.expected_resolution
                    else None
                ),
                "zoom_enabled": self.profile.zoom_enabled,
            },
            "conditions": list(self.conditions),
            "canny": {
                "sigma": self.canny.sigma,
                "kernel_radius": self.canny.kernel_radius,
                "low_threshold": self.canny.low_threshold,
                "high_threshold": self.canny.high_threshold,
            },
            "zoom": {
                "target_w": self.zoom.target_w,
                "target_h": self.zoom.target_h,
                "margin_x": self.zoom.margin_x,
                "margin_y": self.zoom.margin_y,
            },
            "augment": self.augment.to_json(),
            "train": self.train.to_json(),
            "conv_channels": list(self.conv_channels),
            "test_fraction": self.test_fraction,
            "master_seed": self.master_seed,
            "repeats": self.repeats,
            "output_dir": self.output_dir,
            "timing": self.timing,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        if doc.get("version") != CONFIG_VERSION:
            raise ValueError(f"unknown config version {doc.get('version')!r}")
        profile_doc = doc.get("profile", {})
        expected = profile_doc.get("expected_resolution")
        profile = DatasetProfile(
            layout=profile_doc.get("layout", "per-subject-dirs"),
            label_pattern=profile_doc.get("label_pattern"),
            expected_resolution=tuple(expected) if expected else None,
            zoom_enabled=profile_doc.get("zoom_enabled", True),
        )
        return cls(
            dataset_root=doc["dataset_root"],
            profile=profile,
            conditions=tuple(doc.get("conditions", CONDITIONS)),
            canny=CannyParams(**doc.get("canny", {})),
            zoom=ZoomSpec(**doc["zoom"]) if doc.get("zoom") else ZoomSpec.default_ami(),
            augment=AugmentConfig.from_json(doc.get("augment", {})),
            train=TrainConfig.from_json(doc.get("train", {})),
            conv_channels=tuple(doc.get("conv_channels", (8, 16, 32))),
            test_fraction=doc.get("test_fraction", 0.2),
            master_seed=doc.get("master_seed", 0),
            repeats=doc.get("repeats", 3),
            output_dir=doc.get("output_dir", "experiment_out"),
            timing=doc.get("timing", False),
        )

    def digest(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def load_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_json(json.loads(Path(path).read_text()))


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_json(), indent=1) + "\n")


def prepare_condition(
    manifest: DatasetManifest,
    condition: str,
    cfg: ExperimentConfig,
    workdir: str | Path,
    augment_seed: int | None = None,
) -> DatasetManifest:
    """Produce the condition's view of the manifest, writing processed images.

    BM returns the manifest unchanged. Zoom and edge detection rewrite every
    record (train and test) into workdir; augmentation then expands only the
    TRAIN split.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    if condition == COND_BM:
        return manifest
    workdir = Path(workdir)
    do_zoom = condition in _ZOOMED and cfg.profile.zoom_enabled
    do_edge = condition in _EDGED
    out = manifest
    if do_zoom or do_edge:
        proc_dir = workdir / "proc"
        proc_dir.mkdir(parents=True, exist_ok=True)
        records = []
        for r in manifest.records:
            try:
                img = load_image(r.path)
                if do_zoom:
                    img = zoom_crop(img, cfg.zoom)
                if do_edge:
                    img = canny(img, cfg.canny).as_rgb()
                path = proc_dir / f"{r.id.replace('/', '__')}.png"
                save_image(img, path)
            except Exception as exc:
                raise RuntimeError(f"preparing {condition} failed on {r.path}: {exc}") from exc
            records.append(
                replace(
                    r,
                    path=str(path.resolve()),
                    provenance=PROV_EDGE_MAP if do_edge else r.provenance,
                )
            )
        out = DatasetManifest(
            dataset_name=manifest.dataset_name,
            records=records,
            created_with_seed=manifest.created_with_seed,
        )
    if condition in _AUGMENTED:
        if augment_seed is None:
            augment_seed = mix_seed(cfg.master_seed, condition, "augment")
        out = expand_dataset(out, cfg.augment, augment_seed, Path(workdir) / "aug")
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every condition x repeat cell and write all artifacts.

    Per-cell failures are recorded in the report rather than aborting the
    run. Artifacts land under cfg.output_dir: per-cell manifests and model
    checkpoints, plus report.csv/json/md, report.png and the resolved config.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = cfg.digest()
    base = scan_dataset(cfg.dataset_root, cfg.profile)
    report = ExperimentReport()
    for repeat in range(cfg.repeats):
        split = split_manifest(
            base, cfg.test_fraction, mix_seed(cfg.master_seed, "split", repeat)
        )
        for condition in cfg.conditions:
            row_seed = mix_seed(cfg.master_seed, condition, repeat)
            started = time.monotonic()
            try:
                row = _run_cell(cfg, split, condition, repeat, row_seed, out_dir, digest)
            except Exception as exc:
                log.warning("cell %s repeat %d failed: %s", condition, repeat, exc)
                row = ReportRow(
                    condition=condition,
                    repeat=repeat,
                    seed=row_seed,
                    train_accuracy=None,
                    test_accuracy=None,
                    wall_time_s=0.0,
                    config_digest=digest,
                    error=str(exc),
                )
            elapsed = time.monotonic() - started
            if row.error is None and cfg.timing:
                row = replace(row, wall_time_s=elapsed)
            log.info(
                "condition %s repeat %d: %s (%.1fs)",
                condition,
                repeat,
                "error" if row.error else f"train {row.train_accuracy:.3f} test {row.test_accuracy:.3f}",
                elapsed,
            )
            report.rows.append(row)
    report.rows.sort(key=lambda r: (CONDITIONS.index(r.condition), r.repeat))
    _write_artifacts(cfg, report, out_dir)
    return report


def _run_cell(
    cfg: ExperimentConfig,
    split: DatasetManifest,
    condition: str,
    repeat: int,
    row_seed: int,
    out_dir: Path,
    digest: str,
) -> ReportRow:
    workdir = out_dir / f"{condition}_r{repeat}"
    workdir.mkdir(parents=True, exist_ok=True)
    prepared = prepare_condition(
        split, condition, cfg, workdir, augment_seed=mix_seed(row_seed, "augment")
    )
    write_manifest(prepared, workdir / "manifest.json")
    train_cfg = replace(cfg.train, seed=mix_seed(row_seed, "train"))
    model, _ = train(prepared, train_cfg, channels=cfg.conv_channels)
    save_model(model, workdir / "model.npz")
    train_acc = evaluate(model, prepared, train_cfg, split=SPLIT_TRAIN)
    test_acc = evaluate(model, prepared, train_cfg)
    return ReportRow(
        condition=condition,
        repeat=repeat,
        seed=row_seed,
        train_accuracy=train_acc,
        test_accuracy=test_acc,
        wall_time_s=0.0,
        config_digest=digest,
    )


def _write_artifacts(cfg: ExperimentConfig, report: ExperimentReport, out_dir: Path) -> None:
    emit_report(report, out_dir / "report.csv", "csv")
    emit_report(report, out_dir / "report.json", "json")
    emit_report(report, out_dir / "report.md", "markdown")
    try:
        render_report_figure(report, out_dir / "report.png")
    except ValueError:
        log.warning("no successful rows; skipping report figure")
    save_config(cfg, out_dir / "config.json")
