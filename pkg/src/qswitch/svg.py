"""Self-contained SVG rendering for traces and sweep maps.

No plotting dependency: documents are assembled as text so that identical
data yields identical bytes.  Nothing external is referenced and no
timestamps are embedded.  The coordinate transform is linear,

    px(x) = PLOT_LEFT + (x - x_min) / (x_max - x_min) * PLOT_WIDTH,
    py(y) = PLOT_TOP + (1 - (y - y_min) / (y_max - y_min)) * PLOT_HEIGHT,

with pixel values written as %.3f.  Heatmap cells tile the plot area in
index order (row 0 at the bottom); overlay curves are drawn in axis-value
space on top of the raster.

Color ramp: 256 steps from blue to red.  A normalized value v in [0, 1]
is quantized to k = round(255 v) and rendered as rgb(k, 0, 255 - k), so
v = 0 is pure blue #0000ff and v = 1 is pure red #ff0000.

NaN or infinite input is an error everywhere: a silently dropped point
would misrepresent the data it plots.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 720, 480
PLOT_LEFT, PLOT_TOP = 84, 40
PLOT_WIDTH, PLOT_HEIGHT = 560, 360
N_TICKS = 5

LINE_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def ramp_color(value: float) -> str:
    """256-step blue-to-red ramp for a normalized value in [0, 1]."""
    if not math.isfinite(value):
        raise ValueError("ramp input must be finite")
    v = min(1.0, max(0.0, value))
    k = round(255 * v)
    return f"#{k:02x}00{255 - k:02x}"


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.size == 0:
        raise ValueError(f"{what} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


def _axis(lo: float, hi: float) -> tuple[float, float]:
    if hi == lo:  # degenerate span: widen symmetrically so the transform is defined
        pad = max(abs(lo), 1.0) * 0.5
        return lo - pad, hi + pad
    return lo, hi


def _px(x: float, lo: float, hi: float) -> float:
    return PLOT_LEFT + (x - lo) / (hi - lo) * PLOT_WIDTH


def _py(y: float, lo: float, hi: float) -> float:
    return PLOT_TOP + (1.0 - (y - lo) / (hi - lo)) * PLOT_HEIGHT


def _open_svg(title: str) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.3f}" y="24" font-family="sans-serif" '
            f'font-size="15" text-anchor="middle">{escape(title)}</text>')
    return parts


def _frame_and_labels(x_label: str, y_label: str) -> list[str]:
    right = PLOT_LEFT + PLOT_WIDTH
    bottom = PLOT_TOP + PLOT_HEIGHT
    return [
        f'<rect x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{PLOT_WIDTH}" '
        f'height="{PLOT_HEIGHT}" fill="none" stroke="#000000"/>',
        f'<text x="{(PLOT_LEFT + right) / 2:.3f}" y="{bottom + 40}" '
        f'font-family="sans-serif" font-size="13" text-anchor="middle">'
        f'{escape(x_label)}</text>',
        f'<text x="20" y="{(PLOT_TOP + bottom) / 2:.3f}" font-family="sans-serif" '
        f'font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 20 {(PLOT_TOP + bottom) / 2:.3f})">'
        f'{escape(y_label)}</text>',
    ]


def _ticks(lo: float, hi: float, horizontal: bool) -> list[str]:
    parts = []
    bottom = PLOT_TOP + PLOT_HEIGHT
    for i in range(N_TICKS):
        frac = i / (N_TICKS - 1)
        value = lo + frac * (hi - lo)
        if horizontal:
            px = PLOT_LEFT + frac * PLOT_WIDTH
            parts.append(f'<line x1="{px:.3f}" y1="{bottom}" x2="{px:.3f}" '
                         f'y2="{bottom + 5}" stroke="#000000"/>')
            parts.append(f'<text x="{px:.3f}" y="{bottom + 20}" '
                         f'font-family="sans-serif" font-size="11" '
                         f'text-anchor="middle">{value:.6g}</text>')
        else:
            py = PLOT_TOP + (1.0 - frac) * PLOT_HEIGHT
            parts.append(f'<line x1="{PLOT_LEFT - 5}" y1="{py:.3f}" '
                         f'x2="{PLOT_LEFT}" y2="{py:.3f}" stroke="#000000"/>')
            parts.append(f'<text x="{PLOT_LEFT - 8}" y="{py + 4:.3f}" '
                         f'font-family="sans-serif" font-size="11" '
                         f'text-anchor="end">{value:.6g}</text>')
    return parts


def _polyline(xs: np.ndarray, ys: np.ndarray, x_rng, y_rng, color: str,
              dashed: bool = False) -> str:
    pts = " ".join(f"{_px(float(x), *x_rng):.3f},{_py(float(y), *y_rng):.3f}"
                   for x, y in zip(xs, ys))
    dash = ' stroke-dasharray="6 4"' if dashed else ""
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"{dash}/>')


def line_plot(series: list[tuple[np.ndarray, np.ndarray, str]],
              x_label: str, y_label: str, title: str = "") -> str:
    """Polyline plot of one or more (x, y, label) traces."""
    if not series:
        raise ValueError("no series to plot")
    cleaned = []
    for xs, ys, label in series:
        xs = _finite(xs, f"series {label!r} x data")
        ys = _finite(ys, f"series {label!r} y data")
        if xs.shape != ys.shape or xs.ndim != 1:
            raise ValueError(f"series {label!r} needs matching 1-d x and y")
        cleaned.append((xs, ys, label))
    x_rng = _axis(min(float(xs.min()) for xs, _, _ in cleaned),
                  max(float(xs.max()) for xs, _, _ in cleaned))
    y_rng = _axis(min(float(ys.min()) for _, ys, _ in cleaned),
                  max(float(ys.max()) for _, ys, _ in cleaned))
    parts = _open_svg(title)
    parts += _ticks(*x_rng, horizontal=True) + _ticks(*y_rng, horizontal=False)
    for idx, (xs, ys, label) in enumerate(cleaned):
        color = LINE_COLORS[idx % len(LINE_COLORS)]
        if xs.size == 1:
            parts.append(f'<circle cx="{_px(float(xs[0]), *x_rng):.3f}" '
                         f'cy="{_py(float(ys[0]), *y_rng):.3f}" r="3" '
                         f'fill="{color}"/>')
        else:
            parts.append(_polyline(xs, ys, x_rng, y_rng, color))
        if label:
            ly = PLOT_TOP + 16 + 16 * idx
            lx = PLOT_LEFT + PLOT_WIDTH - 10
            parts.append(f'<text x="{lx}" y="{ly}" font-family="sans-serif" '
                         f'font-size="11" text-anchor="end" fill="{color}">'
                         f'{escape(label)}</text>')
    parts += _frame_and_labels(x_label, y_label)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap(x_axis: np.ndarray, y_axis: np.ndarray, values: np.ndarray,
            x_label: str, y_label: str, title: str = "",
            overlays: list[tuple[np.ndarray, np.ndarray, str]] | None = None) -> str:
    """Rectangle-raster map of values[i, j] over (y_axis[i], x_axis[j]).

    Values are normalized to the data's own min/max before the color ramp
    (a constant map renders entirely at ramp_color(0)).  Overlay traces are
    drawn as white/dashed polylines in axis-value coordinates.
    """
    x_axis = _finite(x_axis, "x axis")
    y_axis = _finite(y_axis, "y axis")
    values = _finite(values, "heatmap values")
    if values.shape != (y_axis.size, x_axis.size):
        raise ValueError(
            f"values shape {values.shape} does not match axes "
            f"({y_axis.size}, {x_axis.size})")
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    ny, nx = values.shape
    cell_w = PLOT_WIDTH / nx
    cell_h = PLOT_HEIGHT / ny
    parts = _open_svg(title)
    for i in range(ny):
        y_px = PLOT_TOP + PLOT_HEIGHT - (i + 1) * cell_h
        for j in range(nx):
            v = (values[i, j] - lo) / span if span > 0.0 else 0.0
            parts.append(
                f'<rect x="{PLOT_LEFT + j * cell_w:.3f}" y="{y_px:.3f}" '
                f'width="{cell_w + 0.5:.3f}" height="{cell_h + 0.5:.3f}" '
                f'fill="{ramp_color(v)}"/>')
    x_rng = _axis(float(x_axis[0]), float(x_axis[-1]))
    y_rng = _axis(float(y_axis[0]), float(y_axis[-1]))
    for idx, (xs, ys, label) in enumerate(overlays or []):
        xs = _finite(xs, f"overlay {label!r} x data")
        ys = _finite(ys, f"overlay {label!r} y data")
        parts.append(_polyline(xs, ys, x_rng, y_rng, "#ffffff", dashed=idx > 0))
    parts += _ticks(*x_rng, horizontal=True) + _ticks(*y_rng, horizontal=False)
    parts += _frame_and_labels(x_label, y_label)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
