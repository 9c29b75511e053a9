"""Rasterizers for the eight synthetic shape classes.

Each shape is drawn as a boolean mask on the image grid; the annotation
box is derived from the mask's exact pixel bounds, so lit pixels always
lie inside the box.
"""

from __future__ import annotations

import numpy as np

SHAPE_NAMES = {
    1: "circle",
    2: "square",
    3: "triangle",
    4: "cross",
    5: "ring",
    6: "star",
    7: "bar",
    8: "diamond",
}

# Saturated, well-separated base colors so the desk-scale model has a
# learnable class signal on top of geometry.
SHAPE_COLORS = {
    1: (0.95, 0.15, 0.15),
    2: (0.15, 0.85, 0.20),
    3: (0.15, 0.25, 0.95),
    4: (0.95, 0.90, 0.10),
    5: (0.90, 0.15, 0.90),
    6: (0.10, 0.90, 0.90),
    7: (0.95, 0.55, 0.10),
    8: (0.55, 0.15, 0.85),
}


def shape_mask(label: int, cx: float, cy: float, radius: float, h: int, w: int) -> np.ndarray:
    """Boolean (h, w) mask of the shape at pixel center (cx, cy)."""
    yy, xx = np.mgrid[0:h, 0:w]
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    r = radius
    if label == 1:  # circle
        return dx * dx + dy * dy <= r * r
    if label == 2:  # square
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if label == 3:  # triangle (upward, inscribed in radius)
        inside = dy <= r * 0.8
        inside &= dy >= -r + 1.6 * np.abs(dx) - 0.2 * r
        return inside
    if label == 4:  # cross
        arm = max(1.0, r * 0.38)
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= r)
        )
    if label == 5:  # ring
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    if label == 6:  # star (4-pointed)
        a = np.abs(dx) + np.abs(dy)
        m = np.maximum(np.abs(dx), np.abs(dy))
        return (a <= 1.15 * r) & ((m <= 0.45 * r) | (a <= 0.9 * r) | (m >= 1.7 * (a - m)))
    if label == 7:  # bar (wide, flat)
        return (np.abs(dx) <= r) & (np.abs(dy) <= max(1.0, r * 0.35))
    if label == 8:  # diamond
        return np.abs(dx) + np.abs(dy) <= r
    raise ValueError(f"unknown shape label {label}")


def mask_pixel_bounds(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """Tight (x, y, w, h) pixel bounds of a mask, or None when empty."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)
