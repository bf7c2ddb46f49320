"""Static reports: SVG traces and markdown metric tables."""

import math
from xml.sax.saxutils import escape

import numpy as np

from .leads import LEAD_NAMES

TABLE_METRICS = (("pcc", "PCC"), ("rmse", "RMSE"), ("mae_mean", "MAE"), ("dtw", "DTW"),
                 ("delta_qt_s", "dQT (s)"), ("delta_qrs_s", "dQRS (s)"),
                 ("r_detect_pct", "R found (%)"), ("sqi_avg_qrs", "SQI"))


def _poly(values, x0, y0, width, height, lo, hi):
    n = len(values)
    span = hi - lo if hi > lo else 1.0
    xs = x0 + np.arange(n) * (width / max(1, n - 1))
    ys = y0 + height - (np.asarray(values, dtype=np.float64) - lo) / span * height
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def _runs(keep):
    """``[start, stop)`` runs of True in a boolean vector."""
    k = np.concatenate([[False], np.asarray(keep, dtype=bool), [False]])
    d = np.diff(k.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def traces_svg(original, reconstructed, keep=None, title="", width=900, row_height=60):
    """SVG with one row per lead: original in black, reconstruction in red.

    Primer cells (``keep``) are shaded green.
    """
    x = np.asarray(original.samples, dtype=np.float64)
    y = np.asarray(reconstructed.samples, dtype=np.float64)
    n = x.shape[1]
    left, top = 50, 30
    plot_w = width - left - 10
    height = top + row_height * len(LEAD_NAMES) + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left}" y="18" font-family="sans-serif" font-size="14">{escape(title)}</text>']
    for i, name in enumerate(LEAD_NAMES):
        y0 = top + i * row_height
        lo = min(x[i].min(), y[i].min())
        hi = max(x[i].max(), y[i].max())
        if keep is not None:
            for a, b in _runs(keep[i]):
                rx = left + a * plot_w / max(1, n - 1)
                rw = (b - a) * plot_w / max(1, n - 1)
                out.append(f'<rect x="{rx:.2f}" y="{y0}" width="{rw:.2f}" height="{row_height - 6}" '
                           'fill="#d8f0d8"/>')
        out.append(f'<text x="4" y="{y0 + row_height / 2:.0f}" font-family="sans-serif" '
                   f'font-size="12">{name}</text>')
        out.append(f'<polyline fill="none" stroke="black" stroke-width="1" '
                   f'points="{_poly(x[i], left, y0, plot_w, row_height - 6, lo, hi)}"/>')
        out.append(f'<polyline fill="none" stroke="#d62728" stroke-width="1" '
                   f'points="{_poly(y[i], left, y0, plot_w, row_height - 6, lo, hi)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _cell(v, metric):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "n/a"
    if metric == "r_detect_pct":
        return f"{v:.1f}"
    return f"{v:.3f}"


def markdown_table(report):
    """Per-lead means of one configuration, leads as rows."""
    head = "| Lead | " + " | ".join(label for _, label in TABLE_METRICS) + " |"
    sep = "|" + "---|" * (len(TABLE_METRICS) + 1)
    lines = [f"### {report.config_name}", "", head, sep]
    for lead in LEAD_NAMES:
        if lead not in report.per_lead:
            continue
        d = report.per_lead[lead]
        lines.append(f"| {lead} | " + " | ".join(_cell(d[m], m) for m, _ in TABLE_METRICS) + " |")
    agg = report.aggregates
    lines.append("| **mean** | " + " | ".join(
        f"{_cell(agg[m][0], m)} ± {_cell(agg[m][1], m)}" for m, _ in TABLE_METRICS) + " |")
    fails = {m: c for m, c in report.failures.items() if c}
    if fails:
        lines.append("")
        lines.append("Undetectable fiducials (left out of the means): "
                     + ", ".join(f"{m}: {c}" for m, c in sorted(fails.items())))
    lines.append("")
    return "\n".join(lines)


def markdown_report(reports, title="Reconstruction metrics"):
    parts = [f"# {title}", "",
             "DTW is classic DTW normalized by path length; MAE is the mean absolute error.", ""]
    parts.extend(markdown_table(r) for r in reports)
    return "\n".join(parts)
