"""Deterministic standalone SVG rendering for scatterplots and heatmaps."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

# 10-color categorical cycle
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
POINT_RADIUS = 2.5
MARGIN = 0.05
DEFAULT_COLOR = "#4c4c4c"

# light-to-dark sequential ramp endpoints
RAMP_LIGHT = (247, 251, 255)
RAMP_DARK = (8, 48, 107)


def _num(v: float) -> str:
    # fixed precision keeps output byte-stable across platforms
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _bounds(lo: float, hi: float):
    span = hi - lo
    if span == 0:
        span = 1.0
        lo -= 0.5
    return lo - MARGIN * span, span * (1 + 2 * MARGIN)


def scatter_svg(coords, labels=None, width: int = 600, height: int = 600) -> str:
    """Scatterplot of the first two columns; ``labels`` pick palette colors."""
    xy = np.asarray(coords, dtype=np.float64)
    if xy.ndim != 2 or xy.shape[0] == 0:
        raise ValueError("cannot plot an empty projection")
    if xy.shape[1] < 2:
        raise ValueError("scatterplot needs at least 2 columns")
    x0, xspan = _bounds(xy[:, 0].min(), xy[:, 0].max())
    y0, yspan = _bounds(xy[:, 1].min(), xy[:, 1].max())
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for i in range(xy.shape[0]):
        px = (xy[i, 0] - x0) / xspan * width
        py = height - (xy[i, 1] - y0) / yspan * height  # y axis points up
        color = DEFAULT_COLOR if labels is None else PALETTE[int(labels[i]) % len(PALETTE)]
        parts.append(f'<circle cx="{_num(px)}" cy="{_num(py)}" r="{POINT_RADIUS}" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _ramp(t: float) -> str:
    rgb = [round(lo + (hi - lo) * t) for lo, hi in zip(RAMP_LIGHT, RAMP_DARK)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def heatmap_svg(matrix, labels=None, cell: int = 40) -> str:
    """Square-cell heatmap; the matrix sum is printed in the top-right corner."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("cannot draw an empty matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    rows, cols = m.shape
    pad = 30
    width, height = cols * cell + 2 * pad, rows * cell + 2 * pad
    lo, hi = m.min(), m.max()
    scale = (hi - lo) or 1.0
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for r in range(rows):
        for c in range(cols):
            color = _ramp((m[r, c] - lo) / scale)
            parts.append(
                f'<rect x="{pad + c * cell}" y="{pad + r * cell}" width="{cell}" '
                f'height="{cell}" fill="{color}"/>'
            )
    if labels is not None:
        for i, name in enumerate(labels[:cols]):
            parts.append(
                f'<text x="{pad + i * cell + cell // 2}" y="{pad - 8}" font-size="10" '
                f'text-anchor="middle">{escape(str(name))}</text>'
            )
    parts.append(
        f'<text x="{width - 4}" y="14" font-size="12" text-anchor="end" '
        f'fill="#d62728">{_num(m.sum())}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(text: str, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
