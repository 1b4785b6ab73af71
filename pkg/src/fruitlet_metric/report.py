"""Report artifacts: metrics/lengths CSV files, box-plot SVG, markdown summary.

CSV files are byte-reproducible across reruns on identical inputs: rows are
sorted, floats are written with repr (shortest exact form). The timing columns
in metrics.csv are the one exception; they are wall-clock measurements and are
documented as volatile.

Box plots use type-7 (linear interpolation) quantiles, Tukey whiskers at
1.5 * IQR, and explicit outlier dots. The SVG is assembled directly so its
geometry is a pure function of the data.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyInputError, SchemaError
from .evaluation import DatasetDetectionMetrics, LengthErrorStats, LengthRecord
from .inference_adapter import PhaseTiming

LENGTHS_HEADER = ["image_id", "fruit_id", "method", "predicted_mm", "actual_mm", "residual_mm"]
METRICS_HEADER = [
    "method",
    "box_precision", "box_recall", "box_map50",
    "pose_precision", "pose_recall", "pose_map50",
    "preprocess_ms", "inference_ms", "postprocess_ms",  # volatile wall-clock columns
]
TIMING_COLUMNS = ("preprocess_ms", "inference_ms", "postprocess_ms")


def write_lengths_csv(records: Sequence[LengthRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LENGTHS_HEADER)
    for rec in sorted(records, key=lambda r: (r.method, r.image_id, r.fruit_id)):
        writer.writerow([rec.image_id, rec.fruit_id, rec.method,
                         repr(rec.predicted_mm), repr(rec.actual_mm), repr(rec.residual_mm)])
    return out.getvalue()


def read_lengths_csv(text: str) -> list[LengthRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty lengths CSV") from None
    if header[:5] != LENGTHS_HEADER[:5]:
        raise SchemaError(f"unexpected lengths CSV header {header!r}")
    records = []
    for row in reader:
        if not row:
            continue
        records.append(LengthRecord(
            image_id=row[0], fruit_id=row[1], method=row[2],
            predicted_mm=float(row[3]), actual_mm=float(row[4]),
        ))
    return records


def write_metrics_csv(
    rows: Mapping[str, tuple[DatasetDetectionMetrics, Optional[PhaseTiming]]],
) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for method in sorted(rows):
        metrics, timing = rows[method]
        writer.writerow([
            method,
            repr(metrics.box.precision), repr(metrics.box.recall), repr(metrics.box_ap),
            repr(metrics.pose.precision), repr(metrics.pose.recall),
            repr(metrics.pose_ap) if metrics.pose_ap is not None else "",
            repr(timing.preprocess_ms) if timing else "",
            repr(timing.inference_ms) if timing else "",
            repr(timing.postprocess_ms) if timing else "",
        ])
    return out.getvalue()


@dataclass(frozen=True)
class BoxStats:
    """Five-number summary plus outliers for one box."""

    label: str
    n: int
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]


def box_stats(values: Sequence[float], label: str) -> BoxStats:
    """Type-7 quartiles with Tukey 1.5*IQR whiskers clamped to data points."""
    if len(values) == 0:
        raise EmptyInputError(f"no values for box {label!r}")
    data = np.asarray(values, dtype=np.float64)
    q1, median, q3 = (float(q) for q in np.quantile(data, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    low_fence = q1 - 1.5 * iqr
    high_fence = q3 + 1.5 * iqr
    inside = data[(data >= low_fence) & (data <= high_fence)]
    whisker_low = float(inside.min())
    whisker_high = float(inside.max())
    outliers = tuple(sorted(float(v) for v in data[(data < low_fence) | (data > high_fence)]))
    return BoxStats(label=label, n=int(data.size), q1=q1, median=median, q3=q3,
                    whisker_low=whisker_low, whisker_high=whisker_high, outliers=outliers)


def render_boxplot_svg(
    boxes: Sequence[BoxStats],
    title: str = "Length estimates by method",
    y_label: str = "length (mm)",
    missing: Sequence[str] = (),
) -> str:
    """Render side-by-side boxes; methods with no data are noted in the legend."""
    if not boxes:
        raise EmptyInputError("no boxes to plot")
    width, height = 640, 420
    margin_left, margin_right, margin_top, margin_bottom = 70, 20, 50, 70
    plot_w = width - margin_left - margin_right
    plot_h = height - margin_top - margin_bottom

    lows = [min((b.whisker_low, *b.outliers), default=b.whisker_low) for b in boxes]
    highs = [max((b.whisker_high, *b.outliers), default=b.whisker_high) for b in boxes]
    y_min, y_max = min(lows), max(highs)
    if y_max == y_min:  # degenerate all-identical data still renders
        y_min -= 1.0
        y_max += 1.0
    pad = 0.05 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    def y_px(value: float) -> float:
        return margin_top + plot_h * (1.0 - (value - y_min) / (y_max - y_min))

    slot = plot_w / len(boxes)
    box_w = slot * 0.5

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
        f'<text x="18" y="{margin_top + plot_h / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 18 {margin_top + plot_h / 2:.1f})">{y_label}</text>',
        f'<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" '
        f'y2="{margin_top + plot_h}" stroke="black"/>',
        f'<line x1="{margin_left}" y1="{margin_top + plot_h}" x2="{margin_left + plot_w}" '
        f'y2="{margin_top + plot_h}" stroke="black"/>',
    ]
    for i in range(5):
        tick = y_min + (y_max - y_min) * i / 4
        ty = y_px(tick)
        parts.append(f'<line x1="{margin_left - 4}" y1="{ty:.2f}" x2="{margin_left}" '
                     f'y2="{ty:.2f}" stroke="black"/>')
        parts.append(f'<text x="{margin_left - 8}" y="{ty + 4:.2f}" text-anchor="end" '
                     f'font-size="11" font-family="sans-serif">{tick:.2f}</text>')

    for i, box in enumerate(boxes):
        cx = margin_left + slot * (i + 0.5)
        x0, x1 = cx - box_w / 2, cx + box_w / 2
        top, bottom = y_px(box.q3), y_px(box.q1)
        parts += [
            f'<line x1="{cx:.2f}" y1="{y_px(box.whisker_high):.2f}" x2="{cx:.2f}" '
            f'y2="{top:.2f}" stroke="black"/>',
            f'<line x1="{cx:.2f}" y1="{bottom:.2f}" x2="{cx:.2f}" '
            f'y2="{y_px(box.whisker_low):.2f}" stroke="black"/>',
            f'<line x1="{cx - box_w / 4:.2f}" y1="{y_px(box.whisker_high):.2f}" '
            f'x2="{cx + box_w / 4:.2f}" y2="{y_px(box.whisker_high):.2f}" stroke="black"/>',
            f'<line x1="{cx - box_w / 4:.2f}" y1="{y_px(box.whisker_low):.2f}" '
            f'x2="{cx + box_w / 4:.2f}" y2="{y_px(box.whisker_low):.2f}" stroke="black"/>',
            f'<rect x="{x0:.2f}" y="{top:.2f}" width="{box_w:.2f}" '
            f'height="{max(0.0, bottom - top):.2f}" fill="#9ecae1" stroke="black"/>',
            f'<line x1="{x0:.2f}" y1="{y_px(box.median):.2f}" x2="{x1:.2f}" '
            f'y2="{y_px(box.median):.2f}" stroke="black" stroke-width="2"/>',
            f'<text x="{cx:.2f}" y="{margin_top + plot_h + 18}" text-anchor="middle" '
            f'font-size="12" font-family="sans-serif">{box.label}</text>',
            f'<text x="{cx:.2f}" y="{margin_top + plot_h + 34}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">n={box.n}</text>',
        ]
        for value in box.outliers:
            parts.append(f'<circle cx="{cx:.2f}" cy="{y_px(value):.2f}" r="2.5" '
                         f'fill="none" stroke="black"/>')

    if missing:
        note = "no data: " + ", ".join(missing)
        parts.append(f'<text x="{margin_left}" y="{height - 12}" font-size="11" '
                     f'font-family="sans-serif" fill="#777">{note}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def metrics_table_md(csv_text: str) -> str:
    """Render metrics.csv content as a markdown table, bolding column leaders.

    Higher is better for the six quality columns, lower for the timing
    columns; empty cells (undefined metrics) render as '-'.
    """
    reader = csv.reader(io.StringIO(csv_text))
    header = next(reader)
    if header != METRICS_HEADER:
        raise SchemaError(f"unexpected metrics CSV header {header!r}")
    rows = [row for row in reader if row]
    values: list[list[Optional[float]]] = [
        [float(cell) if cell else None for cell in row[1:]] for row in rows
    ]

    def best(col: int, value: float) -> bool:
        pool = [row[col] for row in values if row[col] is not None]
        target = min(pool) if METRICS_HEADER[col + 1] in TIMING_COLUMNS else max(pool)
        return value == target

    lines = [
        "| method | box P | box R | box mAP@50 | pose P | pose R | pose mAP@50 "
        "| pre (ms) | inf (ms) | post (ms) |",
        "|" + "---|" * 10,
    ]
    for row, numbers in zip(rows, values):
        cells = []
        for col, value in enumerate(numbers):
            if value is None:
                cells.append("-")
                continue
            decimals = 2 if METRICS_HEADER[col + 1] in TIMING_COLUMNS else 4
            text = f"{value:.{decimals}f}"
            cells.append(f"**{text}**" if best(col, value) else text)
        lines.append("| " + row[0] + " | " + " | ".join(cells) + " |")
    return "\n".join(lines)


def render_report_md(
    length_stats: Mapping[str, LengthErrorStats],
    metrics_table: Optional[str] = None,
    boxplot_file: str = "boxplot.svg",
    missing_methods: Sequence[str] = (),
) -> str:
    """Markdown summary embedding the metric tables and the box plot."""
    lines = ["# Fruitlet measurement report", ""]
    if metrics_table:
        lines += ["## Detection and pose metrics", "",
                  metrics_table, "",
                  "Best value per column in bold; timing columns are measured on this host.", ""]
    if length_stats:
        lines += ["## Length accuracy (mm)", "",
                  "| method | n | RMSE | MAE |", "|---|---|---|---|"]
        best_rmse = min(s.rmse_mm for s in length_stats.values())
        best_mae = min(s.mae_mm for s in length_stats.values())
        for method in sorted(length_stats):
            stats = length_stats[method]
            rmse = f"{stats.rmse_mm:.4f}"
            mae = f"{stats.mae_mm:.4f}"
            if stats.rmse_mm == best_rmse:
                rmse = f"**{rmse}**"
            if stats.mae_mm == best_mae:
                mae = f"**{mae}**"
            lines.append(f"| {method} | {stats.n} | {rmse} | {mae} |")
        lines.append("")
    lines += [f"![length distribution]({boxplot_file})", ""]
    if missing_methods:
        lines.append(f"Methods with no length records: {', '.join(sorted(missing_methods))}.")
        lines.append("")
    return "\n".join(lines)
