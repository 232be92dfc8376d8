"""Minimal deterministic SVG line plots."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape

PALETTE = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 30, 50


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def emit_svg_plot(series: Dict[str, Tuple[Sequence[float], Sequence[float]]],
                  xlabel: str, ylabel: str, path: Union[str, Path],
                  title: Optional[str] = None, logy: bool = False,
                  vlines: Sequence[float] = ()) -> None:
    """Write one polyline per named series, with axis ticks and a legend in insertion order."""
    if not series:
        raise ValueError("need at least one series")
    pts = {}
    for name, (xs, ys) in series.items():
        xs = [float(x) for x in xs]
        ys = [float(y) for y in ys]
        if logy:
            ys = [math.log10(y) if y > 0 else float("nan") for y in ys]
        pts[name] = [(x, y) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.2f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{TOP + ph}" x2="{sx(t):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{TOP + ph + 18}" text-anchor="middle" font-size="11">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        label = _fmt(10 ** t) if logy else _fmt(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{sy(t):.2f}" x2="{LEFT}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{sy(t) + 4:.2f}" text-anchor="end" font-size="11">{label}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{TOP + ph / 2:.2f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 15 {TOP + ph / 2:.2f})">{escape(ylabel)}</text>')
    for v in vlines:
        if x0 <= v <= x1:
            out.append(f'<line x1="{sx(v):.2f}" y1="{TOP}" x2="{sx(v):.2f}" y2="{TOP + ph}" '
                       f'stroke="gray" stroke-dasharray="4,3"/>')
    for i, (name, p) in enumerate(pts.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in p)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = TOP + 15 + 18 * i
        out.append(f'<line x1="{W - RIGHT + 10}" y1="{ly}" x2="{W - RIGHT + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - RIGHT + 35}" y="{ly + 4}" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
