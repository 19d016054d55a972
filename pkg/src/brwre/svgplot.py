"""Minimal deterministic SVG rendering for curves and planar polygons.

Output is plain SVG 1.1 markup assembled from fixed format strings, so a
given input always produces byte-identical files.  Coordinates are written
with six decimal places.
"""

from __future__ import annotations

import math
from typing import Sequence

_WIDTH = 640
_HEIGHT = 480
_MARGIN = 56

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot render non-finite coordinate {x}")
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


class _Frame:
    """Affine map from data coordinates to the SVG plot area."""

    def __init__(self, xs: Sequence[float], ys: Sequence[float]):
        if not xs:
            raise ValueError("nothing to plot")
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 - x0 < 1e-12:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 - y0 < 1e-12:
            y0, y1 = y0 - 0.5, y1 + 0.5
        px = 0.05 * (x1 - x0)
        py = 0.05 * (y1 - y0)
        self.x0, self.x1 = x0 - px, x1 + px
        self.y0, self.y1 = y0 - py, y1 + py

    def x(self, v: float) -> float:
        t = (v - self.x0) / (self.x1 - self.x0)
        return _MARGIN + t * (_WIDTH - 2 * _MARGIN)

    def y(self, v: float) -> float:
        t = (v - self.y0) / (self.y1 - self.y0)
        return _HEIGHT - _MARGIN - t * (_HEIGHT - 2 * _MARGIN)


def _document(body: list[str], title: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="#ffffff"/>',
        f'<text x="{_WIDTH // 2}" y="24" text-anchor="middle" '
        f'font-family="monospace" font-size="14">{_escape(title)}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _axes(fr: _Frame, x_label: str, y_label: str) -> list[str]:
    out = [
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_WIDTH - 2 * _MARGIN}" '
        f'height="{_HEIGHT - 2 * _MARGIN}" fill="none" stroke="#888888"/>',
        f'<text x="{_WIDTH // 2}" y="{_HEIGHT - 16}" text-anchor="middle" '
        f'font-family="monospace" font-size="12">{_escape(x_label)}</text>',
        f'<text x="16" y="{_HEIGHT // 2}" text-anchor="middle" '
        f'font-family="monospace" font-size="12" '
        f'transform="rotate(-90 16 {_HEIGHT // 2})">{_escape(y_label)}</text>',
    ]
    if fr.x0 < 0.0 < fr.x1:
        gx = _fmt(fr.x(0.0))
        out.append(f'<line x1="{gx}" y1="{_MARGIN}" x2="{gx}" '
                   f'y2="{_HEIGHT - _MARGIN}" stroke="#cccccc" '
                   f'stroke-dasharray="4 3"/>')
    if fr.y0 < 0.0 < fr.y1:
        gy = _fmt(fr.y(0.0))
        out.append(f'<line x1="{_MARGIN}" y1="{gy}" x2="{_WIDTH - _MARGIN}" '
                   f'y2="{gy}" stroke="#cccccc" stroke-dasharray="4 3"/>')
    for v, anchor in ((fr.x0, "start"), (fr.x1, "end")):
        out.append(f'<text x="{_fmt(fr.x(v))}" y="{_HEIGHT - _MARGIN + 16}" '
                   f'text-anchor="{anchor}" font-family="monospace" '
                   f'font-size="10">{_fmt(v)}</text>')
    for v in (fr.y0, fr.y1):
        out.append(f'<text x="{_MARGIN - 4}" y="{_fmt(fr.y(v) + 4)}" '
                   f'text-anchor="end" font-family="monospace" '
                   f'font-size="10">{_fmt(v)}</text>')
    return out


def render_curve(series: Sequence[tuple[str, Sequence[tuple[float, float]]]],
                 *, title: str, x_label: str = "", y_label: str = "") -> str:
    """Render one or more named (x, y) series as polylines with markers."""
    xs = [p[0] for _, pts in series for p in pts]
    ys = [p[1] for _, pts in series for p in pts]
    fr = _Frame(xs, ys)
    body = _axes(fr, x_label, y_label)
    for i, (name, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{_fmt(fr.x(px))},{_fmt(fr.y(py))}"
                          for px, py in pts)
        body.append(f'<polyline points="{coords}" fill="none" '
                    f'stroke="{color}" stroke-width="1.5"/>')
        for px, py in pts:
            body.append(f'<circle cx="{_fmt(fr.x(px))}" '
                        f'cy="{_fmt(fr.y(py))}" r="2" fill="{color}"/>')
        body.append(f'<text x="{_WIDTH - _MARGIN}" y="{_MARGIN + 14 + 14 * i}" '
                    f'text-anchor="end" font-family="monospace" '
                    f'font-size="11" fill="{color}">{_escape(name)}</text>')
    return _document(body, title)


def render_polygons(polygons: Sequence[tuple[str, Sequence[tuple[float, float]]]],
                    *, title: str, x_label: str = "", y_label: str = "") -> str:
    """Render named closed polygons (vertex lists) over shared axes.

    Degenerate one- or two-vertex inputs render as points or a segment.
    """
    xs = [p[0] for _, pts in polygons for p in pts]
    ys = [p[1] for _, pts in polygons for p in pts]
    fr = _Frame(xs, ys)
    body = _axes(fr, x_label, y_label)
    for i, (name, pts) in enumerate(polygons):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{_fmt(fr.x(px))},{_fmt(fr.y(py))}"
                          for px, py in pts)
        if len(pts) >= 3:
            body.append(f'<polygon points="{coords}" fill="{color}" '
                        f'fill-opacity="0.12" stroke="{color}" '
                        f'stroke-width="1.5"/>')
        elif len(pts) == 2:
            body.append(f'<polyline points="{coords}" fill="none" '
                        f'stroke="{color}" stroke-width="1.5"/>')
        for px, py in pts:
            body.append(f'<circle cx="{_fmt(fr.x(px))}" '
                        f'cy="{_fmt(fr.y(py))}" r="2.5" fill="{color}"/>')
        body.append(f'<text x="{_WIDTH - _MARGIN}" y="{_MARGIN + 14 + 14 * i}" '
                    f'text-anchor="end" font-family="monospace" '
                    f'font-size="11" fill="{color}">{_escape(name)}</text>')
    return _document(body, title)


def render_interval_sets(rows: Sequence[tuple[str, Sequence[tuple[float, float]]]],
                         *, title: str, x_label: str = "") -> str:
    """Render 1-d sets as horizontal interval bars, one labeled row each."""
    xs = [v for _, spans in rows for s in spans for v in s]
    if not xs:
        raise ValueError("nothing to plot")
    fr = _Frame(xs, [0.0, float(len(rows))])
    body = _axes(fr, x_label, "")
    for i, (name, spans) in enumerate(rows):
        color = _PALETTE[i % len(_PALETTE)]
        yc = fr.y(len(rows) - 1 - i + 0.5)
        for a, b in spans:
            body.append(f'<line x1="{_fmt(fr.x(a))}" y1="{_fmt(yc)}" '
                        f'x2="{_fmt(fr.x(b))}" y2="{_fmt(yc)}" '
                        f'stroke="{color}" stroke-width="6" '
                        f'stroke-linecap="round"/>')
        body.append(f'<text x="{_MARGIN + 4}" y="{_fmt(yc - 8)}" '
                    f'font-family="monospace" font-size="11" '
                    f'fill="{color}">{_escape(name)}</text>')
    return _document(body, title)
