"""Deterministic SVG charts with CSV twins.

The SVG is written by hand on a fixed canvas with fixed-precision
coordinates, so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptyTrajectory

WIDTH, HEIGHT = 720, 420
MARGIN = dict(left=70, right=130, top=30, bottom=50)
MAX_POINTS = 2000
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _f(x):
    return f"{x:.2f}"


def _nice(x):
    return f"{x:.4g}"


def _svg(body, title):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
            f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>\n')
    return head + "".join(body) + "</svg>\n"


def _downsample(n, limit=MAX_POINTS):
    """Evenly spaced indices, always keeping the first and last point."""
    if n <= limit:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, limit)).astype(int))


def control_chart_csv(trajectories):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row_index", "member_id", "cumulative_score"])
    for t in trajectories:
        for i, v in enumerate(np.asarray(t.partial_sums, dtype=float), start=1):
            w.writerow([i, t.member_id, repr(float(v))])
    return buf.getvalue()


def control_chart_svg(trajectories, title="Control chart"):
    """One polyline per residual model: cumulative score against evaluation row."""
    if not trajectories or any(len(t.partial_sums) == 0 for t in trajectories):
        raise EmptyTrajectory("control chart needs at least one nonempty trajectory")
    n = max(len(t.partial_sums) for t in trajectories)
    lo = min(0.0, min(float(np.min(t.partial_sums)) for t in trajectories))
    hi = max(0.0, max(float(np.max(t.partial_sums)) for t in trajectories))
    if hi - lo < 1e-12:
        hi = lo + 1.0
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def sx(i):
        return x0 + (x1 - x0) * (i / max(n - 1, 1))

    def sy(v):
        return y0 + (y1 - y0) * (v - lo) / (hi - lo)

    body = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>\n',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>\n',
        f'<line x1="{x0}" y1="{_f(sy(0.0))}" x2="{x1}" y2="{_f(sy(0.0))}" stroke="#999" stroke-dasharray="4 3"/>\n',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle">evaluation row</text>\n',
        f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">cumulative score</text>\n',
        f'<text x="{x0 - 6}" y="{_f(sy(lo))}" text-anchor="end">{_nice(lo)}</text>\n',
        f'<text x="{x0 - 6}" y="{_f(sy(hi))}" text-anchor="end">{_nice(hi)}</text>\n',
        f'<text x="{x0}" y="{y0 + 16}" text-anchor="middle">1</text>\n',
        f'<text x="{x1}" y="{y0 + 16}" text-anchor="middle">{n}</text>\n',
    ]
    for j, t in enumerate(trajectories):
        vals = np.asarray(t.partial_sums, dtype=float)
        idx = _downsample(len(vals))
        pts = " ".join(f"{_f(sx(i))},{_f(sy(vals[i]))}" for i in idx)
        color = PALETTE[j % len(PALETTE)]
        body.append(f'<polyline class="member" data-member="{t.member_id}" fill="none" '
                    f'stroke="{color}" stroke-width="1.2" points="{pts}"/>\n')
        ly = MARGIN["top"] + 10 + 18 * j
        body.append(f'<line x1="{x1 + 12}" y1="{ly}" x2="{x1 + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>\n')
        body.append(f'<text class="legend" x="{x1 + 38}" y="{ly + 4}">k = {t.member_id}</text>\n')
    return _svg(body, title)


def emit_control_chart(trajectories, svg_path, csv_path, title="Control chart"):
    svg = control_chart_svg(trajectories, title)
    with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(control_chart_csv(trajectories))


def top_features(ranking, top_n=10):
    """Most important first; ties broken by feature name."""
    ordered = sorted(ranking, key=lambda kv: (-kv[1], kv[0]))
    return ordered[:top_n]


def vi_plot_csv(ranking, top_n=10):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "feature", "importance"])
    for r, (name, imp) in enumerate(top_features(ranking, top_n), start=1):
        w.writerow([r, name, repr(float(imp))])
    return buf.getvalue()


def vi_plot_svg(ranking, top_n=10, title="Variable importance"):
    """Horizontal bars, the most important feature at the top."""
    items = top_features(ranking, top_n)
    if not items:
        raise ValueError("variable importance plot needs at least one feature")
    label_w = 170
    x0, x1 = MARGIN["left"] + label_w - 40, WIDTH - 40
    top, bottom = MARGIN["top"] + 10, HEIGHT - MARGIN["bottom"]
    lo = min(0.0, min(v for _, v in items))
    hi = max(0.0, max(v for _, v in items))
    if hi - lo < 1e-12:
        hi = lo + 1.0
    band = (bottom - top) / len(items)

    def sx(v):
        return x0 + (x1 - x0) * (v - lo) / (hi - lo)

    body = [
        f'<line x1="{_f(sx(0.0))}" y1="{top}" x2="{_f(sx(0.0))}" y2="{bottom}" stroke="black"/>\n',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle">drop in test statistic</text>\n',
        f'<text x="{x0}" y="{bottom + 16}" text-anchor="middle">{_nice(lo)}</text>\n',
        f'<text x="{x1}" y="{bottom + 16}" text-anchor="middle">{_nice(hi)}</text>\n',
    ]
    for i, (name, imp) in enumerate(items):
        y = top + i * band + band * 0.15
        a, b = sorted((sx(0.0), sx(imp)))
        body.append(f'<rect class="bar" x="{_f(a)}" y="{_f(y)}" width="{_f(b - a)}" '
                    f'height="{_f(band * 0.7)}" fill="#4c72b0"/>\n')
        body.append(f'<text x="{x0 - 8}" y="{_f(y + band * 0.35 + 4)}" text-anchor="end">{escape(name)}</text>\n')
    return _svg(body, title)


def emit_vi_plot(ranking, svg_path, csv_path, top_n=10, title="Variable importance"):
    svg = vi_plot_svg(ranking, top_n, title)
    with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(vi_plot_csv(ranking, top_n))
