"""Bird's-eye-view SVG emitter for results files (deterministic bytes)."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Box3D

_CLASS_COLORS = {
    "car": "#1f77b4",
    "truck": "#ff7f0e",
    "bus": "#2ca02c",
    "trailer": "#8c564b",
    "construction_vehicle": "#9467bd",
    "pedestrian": "#d62728",
    "motorcycle": "#e377c2",
    "bicycle": "#17becf",
}
_FALLBACK_COLOR = "#7f7f7f"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_bev_svg(
    boxes: list[tuple[Box3D, str]],
    points_xy: np.ndarray | None = None,
    extent: float = 40.0,
    size_px: int = 640,
) -> str:
    """Top-down SVG: ego at the center, x up, grid every 10 m, heading ticks."""
    scale = size_px / (2.0 * extent)

    def to_px(x: float, y: float) -> tuple[float, float]:
        # ego-frame x (forward) points up, y (left) points left
        return (size_px / 2.0 - y * scale, size_px / 2.0 - x * scale)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size_px}" height="{size_px}" '
        f'viewBox="0 0 {size_px} {size_px}">',
        f'<rect width="{size_px}" height="{size_px}" fill="white" stroke="black"/>',
    ]
    step = 10.0
    k = 1
    while k * step < extent:
        for sign in (-1.0, 1.0):
            off = size_px / 2.0 + sign * k * step * scale
            parts.append(
                f'<line x1="{_fmt(off)}" y1="0" x2="{_fmt(off)}" y2="{size_px}" '
                'stroke="#dddddd" stroke-width="1"/>'
            )
            parts.append(
                f'<line x1="0" y1="{_fmt(off)}" x2="{size_px}" y2="{_fmt(off)}" '
                'stroke="#dddddd" stroke-width="1"/>'
            )
        k += 1
    mid = size_px / 2.0
    parts.append(f'<line x1="{mid}" y1="0" x2="{mid}" y2="{size_px}" stroke="#aaaaaa" stroke-width="1"/>')
    parts.append(f'<line x1="0" y1="{mid}" x2="{size_px}" y2="{mid}" stroke="#aaaaaa" stroke-width="1"/>')
    parts.append(f'<text x="4" y="14" font-size="12" fill="#333333">grid 10 m, extent {extent:g} m</text>')

    if points_xy is not None and len(points_xy):
        for x, y in np.asarray(points_xy, dtype=np.float64)[:, :2]:
            if abs(x) > extent or abs(y) > extent:
                continue
            px, py = to_px(float(x), float(y))
            parts.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="1" fill="#bbbbbb"/>')

    for box, class_name in boxes:
        color = _CLASS_COLORS.get(class_name, _FALLBACK_COLOR)
        corners = box.corners_bev()
        pts = " ".join(_fmt(c) for xy in corners for c in to_px(float(xy[0]), float(xy[1])))
        parts.append(
            f'<polygon points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        cx, cy = box.center[:2]
        tip = (
            cx + 0.5 * box.size[0] * math.cos(box.yaw),
            cy + 0.5 * box.size[0] * math.sin(box.yaw),
        )
        p0 = to_px(float(cx), float(cy))
        p1 = to_px(float(tip[0]), float(tip[1]))
        parts.append(
            f'<line x1="{_fmt(p0[0])}" y1="{_fmt(p0[1])}" x2="{_fmt(p1[0])}" y2="{_fmt(p1[1])}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


__all__ = ["render_bev_svg"]
