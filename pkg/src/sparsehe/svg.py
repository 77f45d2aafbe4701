"""Tiny SVG line-chart writer so reports need no plotting library."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
WIDTH, HEIGHT, PAD = 640, 400, 60


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _transform(values, log: bool):
    if not log:
        return list(values)
    return [math.log10(v) if v > 0 else math.nan for v in values]


def line_chart(
    series: dict,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log_x: bool = False,
    log_y: bool = False,
) -> str:
    """``series`` maps a label to ``(xs, ys)``; returns the SVG document text."""
    pts = {}
    for label, (xs, ys) in series.items():
        tx, ty = _transform(xs, log_x), _transform(ys, log_y)
        pts[label] = [(x, y) for x, y in zip(tx, ty) if math.isfinite(x) and math.isfinite(y)]
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return PAD + (x - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def sy(y):
        return HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(x0, x1):
        label = f"1e{t:.1f}" if log_x else f"{t:.3g}"
        out.append(f'<text x="{sx(t):.1f}" y="{HEIGHT - PAD + 16}" text-anchor="middle">{label}</text>')
    for t in _ticks(y0, y1):
        label = f"1e{t:.1f}" if log_y else f"{t:.3g}"
        out.append(f'<text x="{PAD - 6}" y="{sy(t) + 4:.1f}" text-anchor="end">{label}</text>')
    for i, (label, p) in enumerate(pts.items()):
        color = COLORS[i % len(COLORS)]
        if p:
            path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in p)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        ly = PAD + 16 * i
        out.append(f'<line x1="{WIDTH - PAD - 110}" y1="{ly}" x2="{WIDTH - PAD - 90}" y2="{ly}" stroke="{color}"/>')
        out.append(f'<text x="{WIDTH - PAD - 85}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
