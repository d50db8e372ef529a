"""Experiment report emission: CSV, JSON, markdown and a comparison figure.

The markdown table mirrors the familiar results-table layout: one column
group per condition with train/test subcolumns, one row per repeat, plus a
median row. The figure is a grouped bar chart of median accuracies written
alongside the delimited output.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

REPORT_VERSION = "report_v1"
REPORT_FORMATS = ("csv", "json", "markdown")

CSV_COLUMNS = ("condition", "repeat", "seed", "train_acc", "test_acc", "wall_time_s")


@dataclass(frozen=True)
class ReportRow:
    condition: str
    repeat: int
    seed: int
    train_accuracy: float | None
    test_accuracy: float | None
    wall_time_s: float
    config_digest: str
    error: str | None = None


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)

    @property
    def conditions(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.condition not in seen:
                seen.append(r.condition)
        return seen

    def ok_rows(self, condition: str) -> list[ReportRow]:
        return [r for r in self.rows if r.condition == condition and r.error is None]

    def median_test_accuracy(self, condition: str) -> float:
        rows = self.ok_rows(condition)
        if not rows:
            raise ValueError(f"no successful rows for condition {condition}")
        return statistics.median(r.test_accuracy for r in rows)

    def median_train_accuracy(self, condition: str) -> float:
        rows = self.ok_rows(condition)
        if not rows:
            raise ValueError(f"no successful rows for condition {condition}")
        return statistics.median(r.train_accuracy for r in rows)

    @property
    def failed(self) -> bool:
        return any(r.error is not None for r in self.rows)


def _fmt_acc(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def report_to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.rows:
        writer.writerow(
            [
                r.condition,
                r.repeat,
                r.seed,
                _fmt_acc(r.train_accuracy),
                _fmt_acc(r.test_accuracy),
                f"{r.wall_time_s:.3f}",
            ]
        )
    return buf.getvalue()


def report_to_json(report: ExperimentReport) -> str:
    doc = {
        "version": REPORT_VERSION,
        "rows": [
            {
                "condition": r.condition,
                "repeat": r.repeat,
                "seed": r.seed,
                "train_accuracy": r.train_accuracy,
                "test_accuracy": r.test_accuracy,
                "wall_time_s": r.wall_time_s,
                "config_digest": r.config_digest,
                "error": r.error,
            }
            for r in report.rows
        ],
    }
    return json.dumps(doc, indent=1) + "\n"


def report_from_json(text: str) -> ExperimentReport:
    doc = json.loads(text)
    if doc.get("version") != REPORT_VERSION:
        raise ValueError(f"unknown report version {doc.get('version')!r}")
    return ExperimentReport(rows=[ReportRow(**row) for row in doc["rows"]])


def report_to_markdown(report: ExperimentReport) -> str:
    conditions = report.conditions
    header = ["Repeat"]
    for c in conditions:
        header += [f"{c} train", f"{c} test"]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
    ]
    repeats = sorted({r.repeat for r in report.rows})
    by_key = {(r.condition, r.repeat): r for r in report.rows}
    for rep in repeats:
        cells = [str(rep)]
        for c in conditions:
            row = by_key.get((c, rep))
            if row is None or row.error is not None:
                cells += ["failed", "failed"]
            else:
                cells += [_fmt_acc(row.train_accuracy), _fmt_acc(row.test_accuracy)]
        lines.append("| " + " | ".join(cells) + " |")
    median_cells = ["median"]
    for c in conditions:
        if report.ok_rows(c):
            median_cells += [
                _fmt_acc(report.median_train_accuracy(c)),
                _fmt_acc(report.median_test_accuracy(c)),
            ]
        else:
            median_cells += ["-", "-"]
    lines.append("| " + " | ".join(median_cells) + " |")
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, path: str | Path, fmt: str) -> Path:
    """Write the report in the requested format; returns the path written."""
    if not report.rows:
        raise ValueError("report has no rows")
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")
    path = Path(path)
    if fmt == "csv":
        path.write_text(report_to_csv(report))
    elif fmt == "json":
        path.write_text(report_to_json(report))
    else:
        path.write_text(report_to_markdown(report))
    return path


def render_report_figure(report: ExperimentReport, path: str | Path) -> Path:
    """Grouped bar chart of per-condition median train/test accuracy."""
    conditions = [c for c in report.conditions if report.ok_rows(c)]
    if not conditions:
        raise ValueError("report has no successful rows to plot")
    train = [report.median_train_accuracy(c) for c in conditions]
    test = [report.median_test_accuracy(c) for c in conditions]
    x = range(len(conditions))
    width = 0.38
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(conditions), 3.6))
    ax.bar([i - width / 2 for i in x], train, width, label="train", color="#4878a8")
    ax.bar([i + width / 2 for i in x], test, width, label="test", color="#e1812c")
    ax.set_xticks(list(x))
    ax.set_xticklabels(conditions)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("median accuracy")
    ax.set_title("Accuracy by condition")
    ax.legend(loc="lower right")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
