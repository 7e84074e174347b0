"""Minimal deterministic SVG log-log plots, no plotting dependencies.

Emits plain path/line/text elements with fixed-precision coordinates so
that rerunning a study reproduces the artifact byte-for-byte.
"""
from __future__ import annotations

import math

import numpy as np

_PALETTE = ("#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#b7950b", "#34495e")
_WIDTH, _HEIGHT = 640, 440
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 30, 50


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1))


def log_log_plot(series, title: str = "", xlabel: str = "epsilon",
                 ylabel: str = "value") -> str:
    """Render labelled (x, y) series on log-log axes; returns SVG text.

    ``series`` is a list of (label, x_values, y_values); nonpositive points
    are dropped per-series (they have no logarithm), and a series with no
    positive points is kept in the legend with a note.
    """
    cleaned = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = (xs > 0) & (ys > 0) & np.isfinite(xs) & np.isfinite(ys)
        cleaned.append((label, xs[keep], ys[keep]))

    xs_all = np.concatenate([c[1] for c in cleaned]) if cleaned else np.array([])
    ys_all = np.concatenate([c[2] for c in cleaned]) if cleaned else np.array([])
    if xs_all.size == 0:
        x_lo, x_hi, y_lo, y_hi = 1e-2, 1.0, 1e-2, 1.0
    else:
        x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
        y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
        if x_lo == x_hi:
            x_lo, x_hi = x_lo / 2, x_hi * 2
        if y_lo == y_hi:
            y_lo, y_hi = y_lo / 2, y_hi * 2

    lx0, lx1 = math.log10(x_lo), math.log10(x_hi)
    ly0, ly1 = math.log10(y_lo), math.log10(y_hi)
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(x):
        return _MARGIN_L + (math.log10(x) - lx0) / (lx1 - lx0) * plot_w

    def sy(y):
        return _MARGIN_T + (ly1 - math.log10(y)) / (ly1 - ly0) * plot_h

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
           f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
           f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>']
    # frame
    x0, y0 = _MARGIN_L, _MARGIN_T
    x1, y1 = _WIDTH - _MARGIN_R, _HEIGHT - _MARGIN_B
    out.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" '
               f'height="{y1 - y0}" fill="none" stroke="black"/>')
    if title:
        out.append(f'<text x="{(_WIDTH) // 2}" y="20" text-anchor="middle" '
                   f'font-family="monospace" font-size="13">{title}</text>')
    # decade ticks and gridlines
    for d in _decades(x_lo, x_hi):
        v = 10.0 ** d
        if x_lo <= v <= x_hi:
            px = sx(v)
            out.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" '
                       f'y2="{y1}" stroke="#dddddd"/>')
            out.append(f'<text x="{_fmt(px)}" y="{y1 + 18}" '
                       f'text-anchor="middle" font-family="monospace" '
                       f'font-size="11">1e{d}</text>')
    for d in _decades(y_lo, y_hi):
        v = 10.0 ** d
        if y_lo <= v <= y_hi:
            py = sy(v)
            out.append(f'<line x1="{x0}" y1="{_fmt(py)}" x2="{x1}" '
                       f'y2="{_fmt(py)}" stroke="#dddddd"/>')
            out.append(f'<text x="{x0 - 6}" y="{_fmt(py + 4)}" '
                       f'text-anchor="end" font-family="monospace" '
                       f'font-size="11">1e{d}</text>')
    out.append(f'<text x="{(x0 + x1) // 2}" y="{_HEIGHT - 10}" '
               f'text-anchor="middle" font-family="monospace" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{(y0 + y1) // 2}" text-anchor="middle" '
               f'font-family="monospace" font-size="12" '
               f'transform="rotate(-90 16 {(y0 + y1) // 2})">{ylabel}</text>')
    # series
    for i, (label, xs, ys) in enumerate(cleaned):
        color = _PALETTE[i % len(_PALETTE)]
        legend_y = y0 + 16 + 16 * i
        note = label if xs.size else f"{label} (no positive values)"
        out.append(f'<text x="{x1 - 8}" y="{legend_y}" text-anchor="end" '
                   f'font-family="monospace" font-size="11" '
                   f'fill="{color}">{note}</text>')
        if not xs.size:
            continue
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}"
                       for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" '
                       f'r="3" fill="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_log_log_plot(path, series, **kwargs) -> None:
    with open(path, "w") as fh:
        fh.write(log_log_plot(series, **kwargs))
