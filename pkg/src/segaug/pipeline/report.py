"""CSV serialization of experiment reports and a static SVG bar chart."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .experiment import Cell, ExperimentReport, PairedTest

CELL_COLUMNS = ["condition", "fold", "global_class", "n_test", "dice_mean", "dice_std"]
TEST_COLUMNS = ["condition", "global_class", "wilcoxon_W", "p_two_sided"]
FAILED = "failed"


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def _pval(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6g}"


def _header(report: ExperimentReport) -> list[str]:
    return [
        f"# fingerprint={report.fingerprint}",
        f"# splits={report.split_fingerprint}",
        f"# conditions={','.join(report.conditions)}",
        f"# folds={report.n_folds} classes={report.n_classes}",
    ]


def cells_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    for line in _header(report):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_COLUMNS)
    for c in report.cells:
        if c.failed:
            w.writerow([c.condition, c.fold, c.global_class, c.n_test, FAILED, FAILED])
        else:
            w.writerow([c.condition, c.fold, c.global_class, c.n_test, _num(c.dice_mean), _num(c.dice_std)])
    return buf.getvalue()


def tests_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    buf.write(f"# fingerprint={report.fingerprint}\n")
    buf.write(f"# pairing=per-record Dice vs {report.conditions[0]}, pooled over folds\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TEST_COLUMNS)
    for t in report.tests:
        w.writerow([t.condition, t.global_class, _num(t.W), _pval(t.p_two_sided)])
    return buf.getvalue()


def write_report(out_dir, report: ExperimentReport, chart: bool = True) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"cells": out / "report.csv", "tests": out / "wilcoxon.csv"}
    paths["cells"].write_text(cells_csv(report), encoding="utf-8")
    paths["tests"].write_text(tests_csv(report), encoding="utf-8")
    if chart:
        paths["chart"] = out / "dice.svg"
        paths["chart"].write_text(bar_chart_svg(report), encoding="utf-8")
    return paths


def _float(s: str) -> float:
    return float("nan") if s in (FAILED, "nan") else float(s)


def read_report(cells_path, tests_path=None) -> ExperimentReport:
    """Parse the CSV pair back into a report (per-record scores are not stored)."""
    meta = {}
    rows = []
    for line in Path(cells_path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            for part in line[1:].split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k] = v
        elif line.strip():
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if header != CELL_COLUMNS:
        raise ValueError(f"unexpected report columns {header}")
    report = ExperimentReport(
        fingerprint=meta.get("fingerprint", ""),
        conditions=meta["conditions"].split(","),
        n_folds=int(meta["folds"]),
        n_classes=int(meta["classes"]),
        split_fingerprint=meta.get("splits", ""),
    )
    for cond, fold, k, n, mean, std in reader:
        report.cells.append(Cell(cond, int(fold), int(k), int(n), _float(mean), _float(std), failed=mean == FAILED))
    if tests_path is not None:
        lines = [l for l in Path(tests_path).read_text(encoding="utf-8").splitlines() if l and not l.startswith("#")]
        reader = csv.reader(lines)
        if next(reader) != TEST_COLUMNS:
            raise ValueError("unexpected wilcoxon columns")
        for cond, k, w, p in reader:
            report.tests.append(PairedTest(cond, int(k), _float(w), _float(p), -1))
    return report


_PALETTE = ["#9e9e9e", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"]


def bar_chart_svg(report: ExperimentReport, width: int = 640, height: int = 360) -> str:
    """Grouped bars of per-class mean Dice (averaged over folds); one group per condition."""
    K = report.n_classes
    conds = report.conditions
    margin_l, margin_b, margin_t = 50, 60, 20
    plot_w, plot_h = width - margin_l - 20, height - margin_b - margin_t
    group_w = plot_w / max(len(conds), 1)
    bar_w = group_w * 0.8 / K
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" y2="{margin_t + plot_h}" stroke="black"/>',
        f'<line x1="{margin_l}" y1="{margin_t + plot_h}" x2="{margin_l + plot_w}" y2="{margin_t + plot_h}" stroke="black"/>',
    ]
    for tick in range(0, 11, 2):
        y = margin_t + plot_h * (1 - tick / 10)
        parts.append(f'<text x="{margin_l - 6}" y="{y + 4:.1f}" font-size="10" text-anchor="end">{tick / 10:.1f}</text>')
    for gi, cond in enumerate(conds):
        x0 = margin_l + gi * group_w + group_w * 0.1
        for k in range(K):
            vals = [c.dice_mean for c in report.cells if c.condition == cond and c.global_class == k and not c.failed]
            vals = [v for v in vals if not math.isnan(v)]
            v = sum(vals) / len(vals) if vals else 0.0
            h = plot_h * v
            x = x0 + k * bar_w
            parts.append(
                f'<rect class="bar" data-condition="{cond}" data-class="{k}" x="{x:.1f}" y="{margin_t + plot_h - h:.1f}" '
                f'width="{bar_w * 0.9:.1f}" height="{h:.1f}" fill="{_PALETTE[k % len(_PALETTE)]}"><title>{cond} class {k}: {v:.3f}</title></rect>'
            )
        parts.append(
            f'<text x="{x0 + group_w * 0.4:.1f}" y="{margin_t + plot_h + 16}" font-size="11" text-anchor="middle">{cond}</text>'
        )
    for k in range(K):
        x = margin_l + 10 + k * 80
        parts.append(f'<rect x="{x}" y="{height - 22}" width="10" height="10" fill="{_PALETTE[k % len(_PALETTE)]}"/>')
        parts.append(f'<text x="{x + 14}" y="{height - 13}" font-size="10">class {k}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
