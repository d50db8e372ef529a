"""Command-line entry point for the ear-identification pipeline.

Manifest files are the currency between subcommands: scan | split | augment |
train | evaluate chain through them, and `experiment` runs the whole thing in
one shot. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import harness
from .augment import AugmentConfig, expand_dataset
from .canny import CannyParams, canny
from .classifier import TrainConfig, evaluate, load_model, save_model, train
from .dataset import (
    LAYOUT_FILENAME_PATTERN,
    LAYOUT_SUBJECT_DIRS,
    PROV_EDGE_MAP,
    DatasetManifest,
    DatasetProfile,
    read_manifest,
    scan_dataset,
    split_manifest,
    write_manifest,
)
from .geometry import ZoomSpec, zoom_crop
from .glyphs import generate_glyph_dataset
from .image import load_image, save_image
from .report import REPORT_FORMATS, emit_report, render_report_figure, report_from_json

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    # argparse uses exit code 2 for usage errors; this tool reserves 2 for
    # runtime failures and reports usage problems with 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _size_pair(text: str) -> tuple[int, int]:
    w, _, h = text.partition("x")
    return int(w), int(h)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="earid", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    scan = sub.add_parser("scan", help="scan a dataset tree into a manifest")
    scan.add_argument("--root", required=True)
    scan.add_argument(
        "--layout",
        choices=[LAYOUT_SUBJECT_DIRS, LAYOUT_FILENAME_PATTERN],
        default=LAYOUT_SUBJECT_DIRS,
    )
    scan.add_argument("--label-pattern", help="regex with one capture group")
    scan.add_argument("--expected-resolution", type=_size_pair, metavar="WxH")
    scan.add_argument("--out", required=True, help="manifest file to write")
    scan.add_argument("--format", choices=["text", "json"], default="text")

    split = sub.add_parser("split", help="stratified train/test split of a manifest")
    split.add_argument("--manifest", required=True)
    split.add_argument("--test-fraction", type=float, default=0.2)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out", required=True)

    canny_p = sub.add_parser("canny", help="edge-detect one image or a manifest batch")
    canny_p.add_argument("--in", dest="input")
    canny_p.add_argument("--manifest")
    canny_p.add_argument("--out", required=True, help="output image, or manifest when --manifest")
    canny_p.add_argument("--out-dir", help="edge image directory for batch mode")
    canny_p.add_argument("--sigma", type=float, default=1.4)
    canny_p.add_argument("--radius", type=int)
    canny_p.add_argument("--low", type=float, default=0.1)
    canny_p.add_argument("--high", type=float, default=0.2)
    canny_p.add_argument("--jobs", type=int, default=int(os.environ.get("EARID_JOBS", "1")))

    zoom = sub.add_parser("zoom", help="center zoom-crop one image")
    zoom.add_argument("--in", dest="input", required=True)
    zoom.add_argument("--out", required=True)
    zoom.add_argument("--margin-x", type=float)
    zoom.add_argument("--margin-y", type=float)
    zoom.add_argument("--target", type=_size_pair, metavar="WxH")

    aug = sub.add_parser("augment", help="expand a manifest's TRAIN split")
    aug.add_argument("--manifest", required=True)
    aug.add_argument("--out-dir", required=True)
    aug.add_argument("--out", required=True, help="expanded manifest to write")
    aug.add_argument("--seed", type=int, default=0)
    aug.add_argument("--chains", type=int, help="augmentations per image")
    aug.add_argument("--config", help="JSON file with augmentation settings")

    tr = sub.add_parser("train", help="train the compact CNN on a manifest")
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--out", required=True, help="model checkpoint to write")
    tr.add_argument("--epochs", type=int, default=10)
    tr.add_argument("--batch-size", type=int, default=16)
    tr.add_argument("--lr", type=float, default=0.01)
    tr.add_argument("--momentum", type=float, default=0.9)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--input-size", type=int, default=64)
    tr.add_argument("--channels", default="8,16,32")
    tr.add_argument("--format", choices=["text", "json"], default="text")

    ev = sub.add_parser("evaluate", help="accuracy of a checkpoint on a split")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--model", required=True)
    ev.add_argument("--split", choices=["train", "test"], default="test")
    ev.add_argument("--format", choices=["text", "json"], default="text")

    exp = sub.add_parser("experiment", help="run the condition grid from a config")
    exp.add_argument("--config", required=True)
    exp.add_argument("--output-dir", default=os.environ.get("EARID_OUTPUT_DIR"))
    exp.add_argument("--seed", type=int, help="override the config's master seed")
    exp.add_argument("--format", choices=["text", "json"], default="text")

    rep = sub.add_parser("report", help="re-emit a report.json in another format")
    rep.add_argument("--in", dest="input", required=True)
    rep.add_argument("--format", choices=list(REPORT_FORMATS), default="csv")
    rep.add_argument("--out", required=True)
    rep.add_argument("--figure", help="also render the comparison chart here")

    synth = sub.add_parser("synth", help="generate the synthetic ear-glyph dataset")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--classes", type=int, default=10)
    synth.add_argument("--per-class", type=int, default=30)
    synth.add_argument("--size", type=int, default=64)
    synth.add_argument("--seed", type=int, default=0)

    return p


def _cmd_scan(args) -> int:
    profile = DatasetProfile(
        layout=args.layout,
        label_pattern=args.label_pattern,
        expected_resolution=args.expected_resolution,
    )
    manifest = scan_dataset(args.root, profile)
    write_manifest(manifest, args.out)
    info = {
        "manifest": args.out,
        "records": len(manifest.records),
        "classes": manifest.class_count,
    }
    if args.format == "json":
        print(json.dumps(info))
    else:
        print(f"wrote {args.out}: {info['records']} records, {info['classes']} classes")
    return 0


def _cmd_split(args) -> int:
    manifest = read_manifest(args.manifest)
    out = split_manifest(manifest, args.test_fraction, args.seed)
    write_manifest(out, args.out)
    n_train = len(out.subset("train"))
    n_test = len(out.subset("test"))
    print(f"wrote {args.out}: {n_train} train / {n_test} test")
    return 0


def _cmd_canny(args) -> int:
    params = CannyParams(
        sigma=args.sigma,
        kernel_radius=args.radius,
        low_threshold=args.low,
        high_threshold=args.high,
    )
    if (args.input is None) == (args.manifest is None):
        raise ValueError("pass exactly one of --in or --manifest")
    if args.input:
        save_image(canny(load_image(args.input), params), args.out)
        print(f"wrote {args.out}")
        return 0
    if not args.out_dir:
        raise ValueError("batch mode requires --out-dir")
    manifest = read_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def process(record):
        path = out_dir / f"{record.id.replace('/', '__')}.png"
        save_image(canny(load_image(record.path), params).as_rgb(), path)
        return replace(record, path=str(path.resolve()), provenance=PROV_EDGE_MAP)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(process, manifest.records))
    else:
        records = [process(r) for r in manifest.records]
    write_manifest(
        DatasetManifest(
            dataset_name=manifest.dataset_name,
            records=records,
            created_with_seed=manifest.created_with_seed,
        ),
        args.out,
    )
    print(f"wrote {args.out}: {len(records)} edge maps under {out_dir}")
    return 0


def _cmd_zoom(args) -> int:
    img = load_image(args.input)
    if args.margin_x is None and args.margin_y is None and args.target is None:
        spec = ZoomSpec.default_ami()
    else:
        if args.target is None:
            raise ValueError("custom margins require --target WxH")
        spec = ZoomSpec(
            target_w=args.target[0],
            target_h=args.target[1],
            margin_x=args.margin_x if args.margin_x is not None else 0.0,
            margin_y=args.margin_y if args.margin_y is not None else 0.0,
        )
    save_image(zoom_crop(img, spec), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_augment(args) -> int:
    manifest = read_manifest(args.manifest)
    if args.config:
        cfg = AugmentConfig.from_json(json.loads(Path(args.config).read_text()))
    else:
        cfg = AugmentConfig()
    if args.chains is not None:
        cfg = replace(cfg, chains_per_image=args.chains)
    out = expand_dataset(manifest, cfg, args.seed, args.out_dir)
    write_manifest(out, args.out)
    n_aug = sum(1 for r in out.records if r.provenance == "augmented")
    print(f"wrote {args.out}: {len(out.records)} records ({n_aug} augmented)")
    return 0


def _parse_channels(text: str) -> tuple[int, ...]:
    return tuple(int(c) for c in text.split(",") if c.strip())


def _cmd_train(args) -> int:
    manifest = read_manifest(args.manifest)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        input_size=args.input_size,
    )
    model, metrics = train(manifest, cfg, channels=_parse_channels(args.channels))
    save_model(model, args.out)
    final = metrics[-1]
    if args.format == "json":
        print(json.dumps({"checkpoint": args.out, "epochs": metrics}))
    else:
        print(
            f"wrote {args.out}: final epoch loss {final['loss']:.4f}, "
            f"accuracy {final['accuracy']:.3f}"
        )
    return 0


def _cmd_evaluate(args) -> int:
    manifest = read_manifest(args.manifest)
    model = load_model(args.model)
    cfg = TrainConfig(input_size=model.input_size)
    acc = evaluate(model, manifest, cfg, split=args.split)
    if args.format == "json":
        print(json.dumps({"split": args.split, "accuracy": acc}))
    else:
        print(f"{args.split} accuracy: {acc:.4f}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = harness.load_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    report = harness.run_experiment(cfg)
    if args.format == "json":
        print(
            json.dumps(
                {
                    "output_dir": cfg.output_dir,
                    "rows": len(report.rows),
                    "failed": report.failed,
                }
            )
        )
    else:
        print(f"wrote {cfg.output_dir}/report.csv ({len(report.rows)} rows)")
        for cond in report.conditions:
            if report.ok_rows(cond):
                print(
                    f"  {cond}: median train {report.median_train_accuracy(cond):.3f} "
                    f"test {report.median_test_accuracy(cond):.3f}"
                )
    return 2 if report.failed else 0


def _cmd_report(args) -> int:
    report = report_from_json(Path(args.input).read_text())
    emit_report(report, args.out, args.format)
    print(f"wrote {args.out}")
    if args.figure:
        render_report_figure(report, args.figure)
        print(f"wrote {args.figure}")
    return 0


def _cmd_synth(args) -> int:
    count = generate_glyph_dataset(
        args.out_dir,
        classes=args.classes,
        per_class=args.per_class,
        size=args.size,
        seed=args.seed,
    )
    print(f"wrote {count} glyph images under {args.out_dir}")
    return 0


_COMMANDS = {
    "scan": _cmd_scan,
    "split": _cmd_split,
    "canny": _cmd_canny,
    "zoom": _cmd_zoom,
    "augment": _cmd_augment,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
    "synth": _cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("EARID_LOGLEVEL", "INFO"), format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:
        print(f"earid {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
