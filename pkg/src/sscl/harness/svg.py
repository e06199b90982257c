"""Minimal SVG line charts: axes, ticks, polylines and a legend."""
from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _panel(title, xlabel, series, x0, y0, w, h) -> list:
    pts = [(x, y) for line in series.values() for x, y in line if y is not None]
    out = [f'<g transform="translate({x0},{y0})">',
           f'<text x="{w / 2:.1f}" y="14" text-anchor="middle" font-size="13">{escape(title)}</text>']
    left, top, right, bottom = 50, 24, w - 110, h - 32
    out.append(f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
               'fill="none" stroke="#444"/>')
    if not pts:
        out.append(f'<text x="{(left + right) / 2:.1f}" y="{(top + bottom) / 2:.1f}" '
                   'text-anchor="middle" font-size="11">no data</text></g>')
        return out
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    def sx(v):
        return left + (v - xlo) / (xhi - xlo) * (right - left)

    def sy(v):
        return bottom - (v - ylo) / (yhi - ylo) * (bottom - top)

    for tv in _ticks(xlo, xhi):
        out.append(f'<line x1="{sx(tv):.1f}" y1="{bottom}" x2="{sx(tv):.1f}" y2="{bottom + 4}" stroke="#444"/>')
        out.append(f'<text x="{sx(tv):.1f}" y="{bottom + 15}" text-anchor="middle" font-size="10">{tv:.3g}</text>')
    for tv in _ticks(ylo, yhi):
        out.append(f'<line x1="{left - 4}" y1="{sy(tv):.1f}" x2="{left}" y2="{sy(tv):.1f}" stroke="#444"/>')
        out.append(f'<text x="{left - 6}" y="{sy(tv) + 3:.1f}" text-anchor="end" font-size="10">{tv:.3g}</text>')
    out.append(f'<text x="{(left + right) / 2:.1f}" y="{h - 4}" text-anchor="middle" font-size="11">'
               f'{escape(xlabel)}</text>')
    for i, (name, line) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in line if y is not None)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 14 * i
        out.append(f'<line x1="{right + 8}" y1="{ly - 4}" x2="{right + 22}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{right + 26}" y="{ly}" font-size="10">{escape(str(name))}</text>')
    out.append("</g>")
    return out


def line_charts(panels: list, width: int = 560, panel_height: int = 220) -> str:
    """Stack ``(title, xlabel, {name: [(x, y), ...]})`` panels into one SVG document."""
    height = panel_height * len(panels)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, (title, xlabel, series) in enumerate(panels):
        parts.extend(_panel(title, xlabel, series, 0, i * panel_height, width, panel_height))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
