"""Minimal deterministic SVG line plots.

Coordinates are written with fixed precision so identical data always
produces identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 40, 55


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    k = 0
    while first + k * step <= hi + 1e-9 * step:
        ticks.append(round(first + k * step, 10))
        k += 1
    return ticks


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    return f"{v:.4g}"


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    color: Optional[str] = None


@dataclass
class Figure:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    spans: list = field(default_factory=list)
    equal_aspect: bool = False

    def line(self, x, y, label, color=None) -> "Figure":
        self.series.append(Series(np.asarray(x, dtype=float), np.asarray(y, dtype=float), label, color))
        return self

    def shade(self, x0: float, x1: float, label: str = "") -> "Figure":
        self.spans.append((float(x0), float(x1), label))
        return self

    def _limits(self):
        xs = [s.x[np.isfinite(s.x)] for s in self.series] + [np.array(sp[:2]) for sp in self.spans]
        ys = [s.y[np.isfinite(s.y)] for s in self.series]
        xs = np.concatenate(xs) if xs else np.zeros(1)
        ys = np.concatenate(ys) if ys else np.zeros(1)
        if xs.size == 0:
            xs = np.zeros(1)
        if ys.size == 0:
            ys = np.zeros(1)
        x0, x1, y0, y1 = float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max())
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        pad = 0.05 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad
        if self.equal_aspect:
            pw, ph = WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B
            scale = max((x1 - x0) / pw, (y1 - y0) / ph)
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            x0, x1 = cx - 0.5 * scale * pw, cx + 0.5 * scale * pw
            y0, y1 = cy - 0.5 * scale * ph, cy + 0.5 * scale * ph
        return x0, x1, y0, y1

    def to_svg(self) -> str:
        x0, x1, y0, y1 = self._limits()
        pl, pr = MARGIN_L, WIDTH - MARGIN_R
        pt, pb = MARGIN_T, HEIGHT - MARGIN_B

        def px(v):
            return pl + (v - x0) / (x1 - x0) * (pr - pl)

        def py(v):
            return pb - (v - y0) / (y1 - y0) * (pb - pt)

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
               f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
               f'<text x="{_f(0.5 * (pl + pr))}" y="{_f(pt - 14)}" text-anchor="middle" '
               f'font-size="14">{escape(self.title)}</text>']
        for a, b, label in self.spans:
            xa, xb = px(max(a, x0)), px(min(b, x1))
            out.append(f'<rect x="{_f(xa)}" y="{_f(pt)}" width="{_f(xb - xa)}" height="{_f(pb - pt)}" '
                       f'fill="#ffd27f" fill-opacity="0.35"/>')
            if label:
                out.append(f'<text x="{_f(0.5 * (xa + xb))}" y="{_f(pt + 14)}" text-anchor="middle" '
                           f'fill="#8a5a00">{escape(label)}</text>')
        out.append(f'<rect x="{pl}" y="{pt}" width="{pr - pl}" height="{pb - pt}" fill="none" stroke="black"/>')
        for t in nice_ticks(x0, x1):
            X = px(t)
            out.append(f'<line x1="{_f(X)}" y1="{pb}" x2="{_f(X)}" y2="{pb + 5}" stroke="black"/>')
            out.append(f'<text x="{_f(X)}" y="{pb + 18}" text-anchor="middle">{_fmt_tick(t)}</text>')
        for t in nice_ticks(y0, y1):
            Y = py(t)
            out.append(f'<line x1="{pl - 5}" y1="{_f(Y)}" x2="{pl}" y2="{_f(Y)}" stroke="black"/>')
            out.append(f'<text x="{pl - 8}" y="{_f(Y + 4)}" text-anchor="end">{_fmt_tick(t)}</text>')
        out.append(f'<text x="{_f(0.5 * (pl + pr))}" y="{HEIGHT - 12}" text-anchor="middle">'
                   f'{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{_f(0.5 * (pt + pb))}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {_f(0.5 * (pt + pb))})">{escape(self.ylabel)}</text>')
        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            ok = np.isfinite(s.x) & np.isfinite(s.y)
            pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(s.x[ok], s.y[ok]))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
            ly = pt + 16 + 18 * i
            out.append(f'<line x1="{pr + 12}" y1="{ly}" x2="{pr + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{pr + 38}" y="{ly + 4}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_svg().encode("utf-8"))
        return path


def decimate(x: Sequence[float], y: Sequence[float], max_points: int = 2000):
    """Keep every k-th point (and the last) so files stay small."""
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) <= max_points:
        return x, y
    k = int(math.ceil(len(x) / max_points))
    idx = np.arange(0, len(x), k)
    if idx[-1] != len(x) - 1:
        idx = np.append(idx, len(x) - 1)
    return x[idx], y[idx]
