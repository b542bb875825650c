"""Standalone SVG log-log chart of MSE against sample budget.

The chart is written by hand as SVG 1.1 so no plotting library is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .errors import DegenerateInput
from .harness import convergence_slope

COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
MINUS = "−"

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 55


@dataclass
class Series:
    label: str
    points: list  # (N, mse) pairs

    @property
    def slope(self):
        try:
            return convergence_slope(self.points)
        except DegenerateInput:
            return None


def format_slope(slope) -> str:
    """Two decimals with a typographic minus sign, e.g. '−1.00'."""
    if slope is None or not math.isfinite(slope):
        return "n/a"
    text = f"{slope:.2f}"
    if text == "-0.00":
        text = "0.00"
    return text.replace("-", MINUS)


def _ticks(lo: float, hi: float) -> list:
    first, last = math.floor(lo), math.ceil(hi)
    step = max(1, math.ceil((last - first) / 8))
    return list(range(first, last + 1, step))


def render_svg(series: list, title: str = "MSE against sample budget") -> str:
    """SVG text with x = log2 N, y = log10 MSE and one polyline per series."""
    pts = [(math.log2(n), math.log10(e)) for s in series for n, e in s.points]
    if not pts:
        raise ValueError("nothing to plot")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x_ticks, y_ticks = _ticks(min(xs), max(xs)), _ticks(min(ys), max(ys))
    x0, x1 = x_ticks[0], max(x_ticks[-1], x_ticks[0] + 1)
    y0, y1 = y_ticks[0], max(y_ticks[-1], y_ticks[0] + 1)
    plot_w, plot_h = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * plot_w

    def sy(v):
        return TOP + (y1 - v) / (y1 - y0) * plot_h

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT + plot_w / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>',
    ]
    for t in x_ticks:
        if x0 <= t <= x1:
            x = sx(t)
            out.append(f'<line x1="{x:.1f}" y1="{TOP + plot_h}" x2="{x:.1f}" y2="{TOP + plot_h + 5}" stroke="black"/>')
            out.append(f'<text x="{x:.1f}" y="{TOP + plot_h + 18}" text-anchor="middle">{t}</text>')
    for t in y_ticks:
        if y0 <= t <= y1:
            y = sy(t)
            label = str(t).replace("-", MINUS)
            out.append(f'<line x1="{LEFT - 5}" y1="{y:.1f}" x2="{LEFT}" y2="{y:.1f}" stroke="black"/>')
            out.append(f'<text x="{LEFT - 8}" y="{y + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{LEFT + plot_w / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">log2 N</text>')
    out.append(f'<text x="18" y="{TOP + plot_h / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + plot_h / 2:.1f})">log10 MSE</text>')

    for i, s in enumerate(series):
        colour = COLOURS[i % len(COLOURS)]
        coords = " ".join(f"{sx(math.log2(n)):.2f},{sy(math.log10(e)):.2f}" for n, e in s.points)
        out.append(f'<polyline class="series" data-label="{escape(s.label)}" points="{coords}" '
                   f'fill="none" stroke="{colour}" stroke-width="2"/>')
        ly = TOP + 14 + 34 * i
        lx = LEFT + plot_w + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}">{escape(s.label)}</text>')
        out.append(f'<text class="slope" x="{lx + 28}" y="{ly + 19}">slope {format_slope(s.slope)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
