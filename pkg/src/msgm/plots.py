"""Dependency-free SVG emitters: scatter, quiver and loss-curve plots.

Output is plain hand-assembled SVG with fixed float formatting, so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .metrics import ScoreField
from .training import LossCurve

_W, _H, _PAD = 640, 640, 50


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _header(width=_W, height=_H):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]


def _frame(x0, x1, y0, y1, width=_W, height=_H):
    parts = [
        f'<rect x="{_PAD}" y="{_PAD}" width="{width - 2 * _PAD}" height="{height - 2 * _PAD}" '
        f'fill="none" stroke="#444" stroke-width="1"/>'
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        px = _PAD + frac * (width - 2 * _PAD)
        py = height - _PAD + 16
        parts.append(f'<text x="{_fmt(px)}" y="{py}" font-size="11" fill="#444" '
                     f'text-anchor="middle">{_fmt(xv)}</text>')
        py2 = height - _PAD - frac * (height - 2 * _PAD)
        parts.append(f'<text x="{_PAD - 6}" y="{_fmt(py2 + 4)}" font-size="11" fill="#444" '
                     f'text-anchor="end">{_fmt(yv)}</text>')
    return parts


def _mapper(x0, x1, y0, y1, width=_W, height=_H):
    sx = (width - 2 * _PAD) / (x1 - x0)
    sy = (height - 2 * _PAD) / (y1 - y0)

    def to_px(x, y):
        return _PAD + (x - x0) * sx, height - _PAD - (y - y0) * sy

    return to_px


def scatter_svg(points: np.ndarray, path, colors=None, title: str = "",
                bounds=None, radius: float = 1.6):
    """Scatter plot of (n, 2) points; `colors` is an optional per-point list."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if bounds is None:
        lo = np.floor(pts.min(axis=0) - 0.5)
        hi = np.ceil(pts.max(axis=0) + 0.5)
        bounds = (lo[0], hi[0], lo[1], hi[1])
    x0, x1, y0, y1 = bounds
    to_px = _mapper(x0, x1, y0, y1)
    out = _header()
    if title:
        out.append(f'<text x="{_W // 2}" y="24" font-size="14" fill="#222" '
                   f'text-anchor="middle">{title}</text>')
    out += _frame(x0, x1, y0, y1)
    for i, (x, y) in enumerate(pts):
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            continue
        px, py = to_px(x, y)
        color = colors[i] if colors is not None else "#1f6fb2"
        out.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="{radius}" '
                   f'fill="{color}" fill-opacity="0.5"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def quiver_svg(field: ScoreField, path, title: str = "", color: str = "#b22222",
               second: ScoreField | None = None, second_color: str = "#333333"):
    """Arrow plot of a score field; optionally overlays a second field."""
    x0, x1 = float(field.xs[0]), float(field.xs[-1])
    y0, y1 = float(field.ys[0]), float(field.ys[-1])
    to_px = _mapper(x0, x1, y0, y1)
    cell = min((x1 - x0) / max(field.xs.size - 1, 1),
               (y1 - y0) / max(field.ys.size - 1, 1))
    out = _header()
    if title:
        out.append(f'<text x="{_W // 2}" y="24" font-size="14" fill="#222" '
                   f'text-anchor="middle">{title}</text>')
    out += _frame(x0, x1, y0, y1)

    def arrows(f: ScoreField, col: str):
        pts, vec = f.points(), f.flat_vectors()
        norms = np.sqrt((vec * vec).sum(axis=1))
        vmax = norms.max() or 1.0
        parts = []
        for (x, y), (u, v), nn in zip(pts, vec, norms):
            if nn == 0.0:
                continue
            # arrows scaled to at most 0.9 cell lengths
            scale = 0.9 * cell * (nn / vmax) / nn
            tip = (x + u * scale, y + v * scale)
            px0, py0 = to_px(x, y)
            px1, py1 = to_px(*tip)
            parts.append(f'<line x1="{_fmt(px0)}" y1="{_fmt(py0)}" x2="{_fmt(px1)}" '
                         f'y2="{_fmt(py1)}" stroke="{col}" stroke-width="1"/>')
            parts.append(f'<circle cx="{_fmt(px1)}" cy="{_fmt(py1)}" r="1.2" fill="{col}"/>')
        return parts

    if second is not None:
        out += arrows(second, second_color)
    out += arrows(field, color)
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def loss_curve_svg(curve: LossCurve, path, title: str = "", smooth: int = 50):
    """Polyline of the retain loss (window-averaged) over steps."""
    steps = np.asarray(curve.steps, dtype=np.float64)
    lg = np.asarray(curve.loss_g, dtype=np.float64)
    if steps.size == 0:
        raise ValueError("loss_curve_svg: empty curve")
    if smooth > 1 and steps.size > smooth:
        kern = np.ones(smooth) / smooth
        lg = np.convolve(lg, kern, mode="valid")
        steps = steps[smooth - 1:]
    x0, x1 = float(steps[0]), float(steps[-1]) if steps[-1] > steps[0] else float(steps[0]) + 1
    y0, y1 = float(lg.min()), float(lg.max())
    if y1 - y0 < 1e-12:
        y1 = y0 + 1.0
    to_px = _mapper(x0, x1, y0, y1)
    out = _header()
    if title:
        out.append(f'<text x="{_W // 2}" y="24" font-size="14" fill="#222" '
                   f'text-anchor="middle">{title}</text>')
    out += _frame(x0, x1, y0, y1)
    pieces = []
    for s, v in zip(steps, lg):
        px, py = to_px(s, v)
        pieces.append(f"{_fmt(px)},{_fmt(py)}")
    out.append(f'<polyline points="{" ".join(pieces)}" fill="none" stroke="#1f6fb2" '
               f'stroke-width="1.5"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
