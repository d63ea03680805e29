"""Self-contained SVG line plots of curve and sweep CSV files."""

from __future__ import annotations

import csv
import io
import math
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

# default (x, y) columns by header
KNOWN_COLUMNS = {
    "time_ms": ("time_ms", "abs_L", "total time (ms)", "|L|"),
    "B": ("B", "T2_ms", "field", "T2 (ms)"),
}


def read_columns(path: str | Path) -> dict[str, np.ndarray]:
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    cols: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) for r in body])
        except ValueError:
            continue  # non-numeric column such as a flag
    return cols


def nice_ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    return np.arange(math.ceil(lo / step) * step, hi + step * 1e-9, step)


def svg_line_plot(series: Sequence[tuple[str, np.ndarray, np.ndarray]], xlabel: str = "", ylabel: str = "",
                  title: str = "", width: int = 640, height: int = 420) -> str:
    """SVG document with one polyline per ``(label, x, y)`` series."""
    if not series:
        raise ValueError("nothing to plot")
    ml, mr, mt, mb = 70, 20, 36 if title else 16, 50
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    y0, y1 = float(np.nanmin(ys)), float(np.nanmax(ys))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in nice_ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{mt + ph}" x2="{px(t):.2f}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{mt + ph + 18}" text-anchor="middle">{t:.4g}</text>')
    for t in nice_ticks(y0, y1):
        out.append(f'<line x1="{ml - 5}" y1="{py(t):.2f}" x2="{ml}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{py(t) + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    if title:
        out.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>')
    for k, (label, x, y) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if np.isfinite(a) and np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 14 + 16 * k
        out.append(f'<line x1="{ml + pw - 150}" y1="{ly - 4}" x2="{ml + pw - 130}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw - 125}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_csv_files(paths: Sequence[str | Path], x: str | None = None, y: str | None = None,
                   title: str = "") -> str:
    series = []
    xlabel = ylabel = ""
    for p in paths:
        cols = read_columns(p)
        first = next(iter(cols), None)
        kx, ky, lx, ly = KNOWN_COLUMNS.get(first, (first, None, first, ""))
        kx, ky = x or kx, y or ky
        if ky is None:
            ky = next((c for c in cols if c != kx), None)
        if kx not in cols or ky not in cols:
            raise ValueError(f"{p}: columns {kx!r}/{ky!r} not found in {sorted(cols)}")
        xlabel = xlabel or (lx if x is None else kx)
        ylabel = ylabel or (ly if y is None else ky)
        series.append((Path(p).stem, cols[kx], cols[ky]))
    return svg_line_plot(series, xlabel, ylabel, title)
