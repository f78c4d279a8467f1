"""Text renderers for statistical and severity reports: CSV, Markdown and SVG.

Tables print values with four decimals; CSV files keep full precision. The
renderers are pure string builders so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
from typing import Mapping, Sequence

import numpy as np

from .metrics import METRIC_NAMES, MetricRow
from .stats import Comparison

STAT_FIELDS = ("dataset", "metric", "comparison", "test", "statistic", "p_raw", "p_adjusted", "stars")


def _full(x) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def fmt4(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    return f"{x:.4f}"


def stat_report_csv(comparisons: Sequence[Comparison]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STAT_FIELDS)
    for c in comparisons:
        w.writerow([c.dataset, c.metric, c.comparison, c.test, _full(c.statistic),
                    _full(c.p_raw), _full(c.p_adjusted), c.stars])
    return buf.getvalue()


def mean_sd(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    if np.any(np.isinf(v)):
        return (math.inf if np.all(v == math.inf) else math.nan), math.nan
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), sd


def cell(values, mark: str = "") -> str:
    m, sd = mean_sd(values)
    if math.isnan(m):
        return ""
    text = fmt4(m) if math.isinf(m) or math.isnan(sd) else f"{fmt4(m)}±{fmt4(sd)}"
    return f"{text} ({mark})" if mark else text


def methods_table_markdown(rows_by_method: Mapping[str, Sequence[MetricRow]],
                           comparisons: Sequence[Comparison],
                           metrics: Sequence[str] = METRIC_NAMES,
                           title: str = "") -> str:
    """Methods x metrics table with ``mean±sd (stars)`` cells, stars versus the baseline."""
    marks = {}
    for c in comparisons:
        label = c.comparison.split(" vs ")[0]
        marks[(label, c.metric)] = c.stars
    lines = []
    if title:
        lines += [f"### {title}", ""]
    lines.append("| method | " + " | ".join(metrics) + " |")
    lines.append("|---" * (len(metrics) + 1) + "|")
    for label in sorted(rows_by_method):
        rows = rows_by_method[label]
        cells = [cell([getattr(r, m) for r in rows], marks.get((label, m), "")) for m in metrics]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def svg_line_plot(series: Mapping[str, Sequence[float]], categories: Sequence[str],
                  ylabel: str, width: int = 480, height: int = 320) -> str:
    """Minimal deterministic SVG line chart, one polyline per series."""
    left, right, top, bottom = 60, 130, 20, 40
    pw, ph = width - left - right, height - top - bottom
    finite = [v for vals in series.values() for v in vals if v is not None and math.isfinite(v)]
    lo, hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def xy(i, v):
        x = left + (pw * i / max(1, len(categories) - 1))
        y = top + ph * (1 - (v - lo) / (hi - lo))
        return f"{x:.2f},{y:.2f}"

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="15" y="{top + ph / 2:.2f}" font-size="12" '
        f'transform="rotate(-90 15 {top + ph / 2:.2f})" text-anchor="middle">{ylabel}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        v = lo + frac * (hi - lo)
        y = top + ph * (1 - frac)
        out.append(f'<text x="{left - 5}" y="{y + 4:.2f}" font-size="10" text-anchor="end">{v:.4f}</text>')
    for i, name in enumerate(categories):
        x = left + pw * i / max(1, len(categories) - 1)
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" font-size="11" '
                   f'text-anchor="middle">{name}</text>')
    for k, (name, vals) in enumerate(sorted(series.items())):
        color = palette[k % len(palette)]
        pts = [xy(i, v) for i, v in enumerate(vals) if v is not None and math.isfinite(v)]
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(pts)}"/>')
            for p in pts:
                px, py = p.split(",")
                out.append(f'<circle cx="{px}" cy="{py}" r="3" fill="{color}"/>')
        ly = top + 14 * (k + 1)
        out.append(f'<rect x="{left + pw + 10}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{left + pw + 25}" y="{ly + 1}" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
