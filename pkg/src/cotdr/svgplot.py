"""Tiny deterministic SVG line-plot writer (polylines plus axes)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _nice_range(lo, hi):
    if not np.isfinite(lo) or not np.isfinite(hi):
        return 0.0, 1.0
    if hi <= lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot_svg(series, title: str = "", xlabel: str = "", ylabel: str = "",
                  width: int = 640, height: int = 400, max_points: int = 4000) -> str:
    """Render ``series`` (sequence of ``(label, x, y)``) as an SVG document.

    Long series are decimated by striding to at most ``max_points`` points
    each. Non-finite samples break the polyline.
    """
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    prepared = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        step = max(1, int(np.ceil(x.size / max_points)))
        prepared.append((str(label), x[::step], y[::step]))
    allx = np.concatenate([p[1] for p in prepared]) if prepared else np.array([])
    ally = np.concatenate([p[2] for p in prepared]) if prepared else np.array([])
    fx, fy = np.isfinite(allx), np.isfinite(ally)
    x0, x1 = _nice_range(allx[fx].min() if fx.any() else 0.0, allx[fx].max() if fx.any() else 1.0)
    y0, y1 = _nice_range(ally[fy].min() if fy.any() else 0.0, ally[fy].max() if fy.any() else 1.0)

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<g class="axes" stroke="black" stroke-width="1">'
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}"/>'
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}"/></g>',
    ]
    ticks = ['<g class="ticks" font-size="10" font-family="sans-serif">']
    for v in np.linspace(x0, x1, 5):
        ticks.append(f'<text x="{sx(v):.2f}" y="{mt + ph + 15}" text-anchor="middle">{v:.4g}</text>')
    for v in np.linspace(y0, y1, 5):
        ticks.append(f'<text x="{ml - 5}" y="{sy(v):.2f}" text-anchor="end">{v:.4g}</text>')
    ticks.append("</g>")
    out += ticks
    if title:
        out.append(f'<text class="title" x="{width / 2:.1f}" y="18" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text class="xlabel" x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text class="ylabel" x="15" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12" '
                   f'transform="rotate(-90 15 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, x, y) in enumerate(prepared):
        color = _COLORS[i % len(_COLORS)]
        ok = np.isfinite(x) & np.isfinite(y)
        # Split at non-finite samples.
        runs = np.split(np.arange(x.size), np.flatnonzero(~ok))
        for run in runs:
            run = run[ok[run]]
            if run.size == 0:
                continue
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[run], y[run]))
            out.append(f'<polyline class="series" data-label="{escape(label)}" fill="none" '
                       f'stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text class="legend" x="{ml + 10}" y="{mt + 14 + 14 * i}" fill="{color}" '
                   f'font-family="sans-serif" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
