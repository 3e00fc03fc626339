"""Minimal SVG writers for line plots and heat maps (no external renderer)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

_W, _H = 640, 420
_L, _R, _T, _B = 70, 20, 40, 55
_COLORS = ("#c0392b", "#2c6fbb", "#27ae60", "#8e44ad")


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo, hi, k=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, k))


def _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi):
    pw, ph = _W - _L - _R, _H - _T - _B
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(xlo, xhi):
        x = _L + (v - xlo) / (xhi - xlo or 1) * pw
        out.append(f'<line x1="{x:.2f}" y1="{_T + ph}" x2="{x:.2f}" y2="{_T + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{_T + ph + 16}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _ticks(ylo, yhi):
        y = _T + ph - (v - ylo) / (yhi - ylo or 1) * ph
        out.append(f'<line x1="{_L - 4}" y1="{y:.2f}" x2="{_L}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{_L - 6}" y="{y + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(f'<text x="{_L + pw / 2}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{_T + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_T + ph / 2})">{escape(ylabel)}</text>')
    return out, pw, ph


def line_plot(path, x, series: dict, title="", xlabel="", ylabel="") -> None:
    """Write a line plot; ``series`` maps legend labels to y arrays.

    Non-finite points break the line.
    """
    x = np.asarray(x, float)
    ys = {k: np.asarray(v, float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    ylo, yhi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if yhi <= ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    xlo, xhi = float(x.min()), float(x.max())
    if xhi <= xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    out, pw, ph = _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi)
    for idx, (label, y) in enumerate(ys.items()):
        color = _COLORS[idx % len(_COLORS)]
        runs, cur = [], []
        for xi, yi in zip(x, y):
            if math.isfinite(yi):
                px = _L + (xi - xlo) / (xhi - xlo) * pw
                py = _T + ph - (yi - ylo) / (yhi - ylo) * ph
                cur.append(f"{px:.2f},{py:.2f}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for r in runs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(r)}"/>')
        ly = _T + 14 + 16 * idx
        out.append(f'<line x1="{_L + pw - 150}" y1="{ly - 4}" x2="{_L + pw - 130}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_L + pw - 125}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def heat_map(path, x, y, z, title="", xlabel="", ylabel="") -> None:
    """Write ``z[i, j]`` (rows follow ``y``, columns ``x``) as a gray-scale map."""
    x, y, z = np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)
    xlo, xhi = float(x.min()), float(x.max()) if x.size > 1 else float(x.min()) + 1
    ylo, yhi = float(y.min()), float(y.max()) if y.size > 1 else float(y.min()) + 1
    out, pw, ph = _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi)
    fin = z[np.isfinite(z)]
    zlo, zhi = (float(fin.min()), float(fin.max())) if fin.size else (0.0, 1.0)
    span = zhi - zlo or 1.0
    cw, chh = pw / max(x.size, 1), ph / max(y.size, 1)
    for i in range(y.size):
        for j in range(x.size):
            v = z[i, j]
            g = 255 - int(round(255 * (v - zlo) / span)) if math.isfinite(v) else 255
            out.append(f'<rect x="{_L + j * cw:.2f}" y="{_T + ph - (i + 1) * chh:.2f}" '
                       f'width="{cw + 0.05:.2f}" height="{chh + 0.05:.2f}" fill="rgb({g},{g},{g})"/>')
    out.append(f'<text x="{_L + pw}" y="{_T - 6}" text-anchor="end">'
               f'dark = {_fmt(zhi)}, light = {_fmt(zlo)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
