from __future__ import annotations

import json

import numpy as np
import pytest

from earid.augment import AugmentConfig
from earid.classifier import TrainConfig
from earid.dataset import DatasetProfile, scan_dataset, split_manifest
from earid.geometry import ZoomSpec
from earid.glyphs import generate_glyph_dataset
from earid.harness import (
    CONDITIONS,
    ExperimentConfig,
    load_config,
    prepare_condition,
    run_experiment,
    save_config,
)
from earid.image import load_image
from earid.report import (
    ExperimentReport,
    ReportRow,
    emit_report,
    render_report_figure,
    report_from_json,
    report_to_csv,
)

from conftest import write_dataset_tree


def _tiny_config(root, out, **overrides) -> ExperimentConfig:
    defaults = dict(
        dataset_root=str(root),
        profile=DatasetProfile(zoom_enabled=False),
        conditions=("BM",),
        train=TrainConfig(epochs=1, batch_size=8, input_size=8, learning_rate=0.01),
        conv_channels=(4,),
        augment=AugmentConfig(chains_per_image=2),
        test_fraction=0.34,
        master_seed=5,
        repeats=1,
        output_dir=str(out),
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="module")
def glyph_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("glyphs") / "data"
    generate_glyph_dataset(root, classes=3, per_class=6, size=16, seed=3)
    return root


@pytest.fixture
def split_glyphs(glyph_root):
    return split_manifest(scan_dataset(glyph_root, DatasetProfile()), 0.34, seed=9)


class TestPrepareCondition:
    def test_bm_passes_through(self, split_glyphs, tmp_path):
        cfg = _tiny_config(tmp_path, tmp_path / "o")
        out = prepare_condition(split_glyphs, "BM", cfg, tmp_path / "w")
        assert out.records == split_glyphs.records

    def test_az_expands_train_only(self, split_glyphs, tmp_path):
        cfg = _tiny_config(tmp_path, tmp_path / "o")
        n_train = len(split_glyphs.subset("train"))
        n_test = len(split_glyphs.subset("test"))
        out = prepare_condition(split_glyphs, "AZ", cfg, tmp_path / "w")
        assert len(out.subset("train")) == n_train * 3
        assert len(out.subset("test")) == n_test
        assert not [r for r in out.subset("test") if r.provenance == "augmented"]

    def test_pp_writes_edge_maps_without_zoom(self, split_glyphs, tmp_path):
        cfg = _tiny_config(tmp_path, tmp_path / "o")  # zoom disabled in profile
        out = prepare_condition(split_glyphs, "PP", cfg, tmp_path / "w")
        assert len(out.records) == len(split_glyphs.records)
        assert all(r.provenance == "edge_map" for r in out.records)
        img = load_image(out.records[0].path)
        assert (img.width, img.height) == (16, 16)  # no zoom applied
        assert set(np.unique(img.pixels).tolist()) <= {0.0, 1.0}

    def test_pp_applies_zoom_when_enabled(self, split_glyphs, tmp_path):
        cfg = _tiny_config(
            tmp_path,
            tmp_path / "o",
            profile=DatasetProfile(zoom_enabled=True),
            zoom=ZoomSpec(target_w=12, target_h=12, margin_x=0.125, margin_y=0.125),
        )
        out = prepare_condition(split_glyphs, "PP", cfg, tmp_path / "w")
        img = load_image(out.records[0].path)
        assert (img.width, img.height) == (12, 12)

    def test_ces_edge_maps_then_augment(self, split_glyphs, tmp_path):
        cfg = _tiny_config(tmp_path, tmp_path / "o")
        out = prepare_condition(split_glyphs, "CES", cfg, tmp_path / "w")
        n_train = len(split_glyphs.subset("train"))
        assert len(out.subset("train")) == n_train * 3
        kinds = {r.provenance for r in out.subset("train")}
        assert kinds == {"edge_map", "augmented"}

    def test_unknown_condition(self, split_glyphs, tmp_path):
        cfg = _tiny_config(tmp_path, tmp_path / "o")
        with pytest.raises(ValueError):
            prepare_condition(split_glyphs, "XX", cfg, tmp_path / "w")


class TestRunExperiment:
    def test_single_condition_shape(self, glyph_root, tmp_path):
        cfg = _tiny_config(glyph_root, tmp_path / "out")
        report = run_experiment(cfg)
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.condition == "BM" and row.error is None
        assert 0.0 <= row.train_accuracy <= 1.0
        assert 0.0 <= row.test_accuracy <= 1.0
        for name in ("report.csv", "report.json", "report.md", "report.png", "config.json"):
            assert (tmp_path / "out" / name).exists()

    def test_rows_share_config_digest(self, glyph_root, tmp_path):
        cfg = _tiny_config(glyph_root, tmp_path / "out", conditions=("BM", "PP"))
        report = run_experiment(cfg)
        assert len({r.config_digest for r in report.rows}) == 1

    def test_deterministic_report_files(self, glyph_root, tmp_path):
        cfg_a = _tiny_config(glyph_root, tmp_path / "a", conditions=("BM", "AZ"))
        cfg_b = _tiny_config(glyph_root, tmp_path / "b", conditions=("BM", "AZ"))
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        # output_dir differs (and is part of the digest) so compare row fields
        ra = report_from_json((tmp_path / "a" / "report.json").read_text())
        rb = report_from_json((tmp_path / "b" / "report.json").read_text())
        for x, y in zip(ra.rows, rb.rows):
            assert (x.condition, x.repeat, x.seed) == (y.condition, y.repeat, y.seed)
            assert x.train_accuracy == y.train_accuracy
            assert x.test_accuracy == y.test_accuracy

    def test_condition_independence(self, glyph_root, tmp_path):
        both = run_experiment(
            _tiny_config(glyph_root, tmp_path / "both", conditions=("BM", "AZ"))
        )
        alone = run_experiment(
            _tiny_config(glyph_root, tmp_path / "alone", conditions=("AZ",))
        )
        az_both = [r for r in both.rows if r.condition == "AZ"]
        az_alone = [r for r in alone.rows if r.condition == "AZ"]
        assert [r.seed for r in az_both] == [r.seed for r in az_alone]
        assert [r.test_accuracy for r in az_both] == [r.test_accuracy for r in az_alone]

    def test_failed_row_recorded_not_raised(self, tmp_path):
        # one unreadable image file makes training fail for that cell
        root = write_dataset_tree(tmp_path / "data", subjects=2, per_subject=3, size=8)
        (root / "subject000" / "img000.png").write_bytes(b"garbage")
        cfg = _tiny_config(root, tmp_path / "out")
        report = run_experiment(cfg)
        assert report.failed
        assert report.rows[0].error is not None

    def test_repeats_validation(self, glyph_root, tmp_path):
        with pytest.raises(ValueError):
            _tiny_config(glyph_root, tmp_path / "o", repeats=0)
        with pytest.raises(ValueError):
            _tiny_config(glyph_root, tmp_path / "o", conditions=("QQ",))


class TestConfigIO:
    def test_round_trip(self, tmp_path):
        cfg = _tiny_config(tmp_path / "d", tmp_path / "o", conditions=CONDITIONS)
        p = tmp_path / "cfg.json"
        save_config(cfg, p)
        back = load_config(p)
        assert back == cfg
        assert back.digest() == cfg.digest()

    def test_unknown_version_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"version": "expcfg_v9", "dataset_root": "x"}))
        with pytest.raises(ValueError):
            load_config(p)


def _report_fixture() -> ExperimentReport:
    rows = []
    for c, cond in enumerate(("BM", "PP", "AZ", "CES")):
        for rep in range(3):
            rows.append(
                ReportRow(
                    condition=cond,
                    repeat=rep,
                    seed=1000 * c + rep,
                    train_accuracy=0.9 + 0.01 * c,
                    test_accuracy=0.5 + 0.1 * c + 0.01 * rep,
                    wall_time_s=0.0,
                    config_digest="abc123",
                )
            )
    return ExperimentReport(rows=rows)


class TestReportEmission:
    def test_csv_shape(self, tmp_path):
        report = _report_fixture()
        p = emit_report(report, tmp_path / "r.csv", "csv")
        lines = p.read_text().splitlines()
        assert lines[0] == "condition,repeat,seed,train_acc,test_acc,wall_time_s"
        assert len(lines) == 1 + 12

    def test_single_row_csv(self, tmp_path):
        report = ExperimentReport(rows=_report_fixture().rows[:1])
        p = emit_report(report, tmp_path / "r.csv", "csv")
        assert len(p.read_text().splitlines()) == 2

    def test_json_parse_csv_equals_direct_csv(self, tmp_path):
        report = _report_fixture()
        emit_report(report, tmp_path / "r.json", "json")
        reparsed = report_from_json((tmp_path / "r.json").read_text())
        assert report_to_csv(reparsed) == report_to_csv(report)

    def test_markdown_groups_conditions(self, tmp_path):
        report = _report_fixture()
        p = emit_report(report, tmp_path / "r.md", "markdown")
        header = p.read_text().splitlines()[0]
        for cond in ("BM", "PP", "AZ", "CES"):
            assert f"{cond} train" in header and f"{cond} test" in header
        assert "median" in p.read_text().splitlines()[-1]

    def test_figure_rendered(self, tmp_path):
        report = _report_fixture()
        p = render_report_figure(report, tmp_path / "r.png")
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_median_accuracy(self):
        report = _report_fixture()
        assert report.median_test_accuracy("BM") == pytest.approx(0.51)

    def test_empty_report_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(ExperimentReport(), tmp_path / "r.csv", "csv")

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(_report_fixture(), tmp_path / "r.x", "xml")
