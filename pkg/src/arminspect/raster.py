"""Scanline rasterization of polygon rings onto a pixel grid.

A pixel (i, j) is considered covered when its center (i + 0.5, j + 0.5)
lies inside the union of rings under the even-odd rule.  Multiple rings
toggle coverage, so a ring fully contained in another acts as a hole.

The implementation is pure integer/float arithmetic with no library
rasterizer behind it, so results are identical across platforms and runs.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np


class ZeroDims(ValueError):
    """Raster target has zero width or height."""


def ring_array(ring: Sequence) -> np.ndarray:
    """Coerce a ring to an (n, 2) float array.

    Accepts either a flat [x0, y0, x1, y1, ...] sequence (COCO style) or
    an (n, 2) array of vertices.
    """
    a = np.asarray(ring, dtype=float)
    if a.ndim == 1:
        if a.size % 2 != 0:
            raise ValueError(f"flat ring must have an even number of coordinates, got {a.size}")
        a = a.reshape(-1, 2)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"ring must be (n, 2) or flat, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("ring contains non-finite vertices")
    return a


def flatten_ring(ring: Sequence) -> tuple[float, ...]:
    """Flatten a ring to the COCO [x0, y0, x1, y1, ...] tuple form."""
    return tuple(float(v) for v in ring_array(ring).ravel())


def rasterize_rings(rings: Iterable[Sequence], width: int, height: int) -> np.ndarray:
    """Rasterize polygon rings to a (height, width) boolean mask.

    Coverage is decided per pixel center under the even-odd rule, with
    edges treated half-open in both axes: a scanline at the minimum y of
    an edge crosses it, one at the maximum y does not, and a pixel whose
    center sits exactly on a crossing is covered from that crossing on.
    Horizontal edges never cross a scanline.
    """
    if width <= 0 or height <= 0:
        raise ZeroDims(f"raster target must be positive, got {width}x{height}")
    width = int(width)
    height = int(height)

    # toggles[j, t] counts crossings at row j whose first affected pixel
    # column is t; column `width` is a sink for crossings right of the grid.
    toggles = np.zeros((height, width + 1), dtype=np.int64)
    for ring in rings:
        pts = ring_array(ring)
        if len(pts) < 3:
            continue
        x0 = pts[:, 0]
        y0 = pts[:, 1]
        x1 = np.roll(x0, -1)
        y1 = np.roll(y0, -1)
        for ex0, ey0, ex1, ey1 in zip(x0, y0, x1, y1):
            if ey0 == ey1:
                continue
            y_lo, y_hi = (ey0, ey1) if ey0 < ey1 else (ey1, ey0)
            j_first = max(0, math.ceil(y_lo - 0.5))
            j_last = min(height - 1, math.ceil(y_hi - 0.5) - 1)
            if j_last < j_first:
                continue
            rows = np.arange(j_first, j_last + 1)
            yc = rows + 0.5
            xc = ex0 + (yc - ey0) * (ex1 - ex0) / (ey1 - ey0)
            cols = np.ceil(xc - 0.5).astype(np.int64)
            np.clip(cols, 0, width, out=cols)
            np.add.at(toggles, (rows, cols), 1)

    parity = np.cumsum(toggles, axis=1) & 1
    return parity[:, :width].astype(bool)


def rings_bbox(rings: Iterable[Sequence]) -> tuple[float, float, float, float]:
    """Tight (x, y, w, h) bounding box over all ring vertices."""
    arrays = [ring_array(r) for r in rings]
    arrays = [a for a in arrays if len(a)]
    if not arrays:
        raise ValueError("cannot take the bbox of an empty ring set")
    pts = np.concatenate(arrays, axis=0)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return float(x0), float(y0), float(x1 - x0), float(y1 - y0)


def pixel_area(rings: Iterable[Sequence], width: int, height: int) -> float:
    """Covered-pixel count of ``rings`` on a width x height grid.

    Rasterizes only the integer-aligned window around the rings so large
    images stay cheap; the window shift preserves pixel-center alignment.
    """
    rings = [ring_array(r) for r in rings]
    rings = [r for r in rings if len(r) >= 3]
    if not rings:
        return 0.0
    x, y, w, h = rings_bbox(rings)
    ox = max(0, math.floor(x))
    oy = max(0, math.floor(y))
    wx = min(int(width), math.ceil(x + w) + 1) - ox
    wy = min(int(height), math.ceil(y + h) + 1) - oy
    if wx <= 0 or wy <= 0:
        return 0.0
    shifted = [r - np.array([ox, oy], dtype=float) for r in rings]
    mask = rasterize_rings(shifted, wx, wy)
    return float(mask.sum())


def clip_ring_to_rect(ring: Sequence, width: float, height: float) -> np.ndarray:
    """Sutherland-Hodgman clip of one ring against [0, width] x [0, height].

    Returns an (n, 2) array; n may be 0 when the ring lies fully outside.
    """
    pts = [tuple(p) for p in ring_array(ring)]
    # (inside predicate, intersection solver) per rect edge
    edges = (
        (lambda p: p[0] >= 0.0, lambda p, q: _x_cross(p, q, 0.0)),
        (lambda p: p[0] <= width, lambda p, q: _x_cross(p, q, width)),
        (lambda p: p[1] >= 0.0, lambda p, q: _y_cross(p, q, 0.0)),
        (lambda p: p[1] <= height, lambda p, q: _y_cross(p, q, height)),
    )
    for inside, cross in edges:
        if not pts:
            break
        out: list[tuple[float, float]] = []
        prev = pts[-1]
        prev_in = inside(prev)
        for cur in pts:
            cur_in = inside(cur)
            if cur_in:
                if not prev_in:
                    out.append(cross(prev, cur))
                out.append(cur)
            elif prev_in:
                out.append(cross(prev, cur))
            prev, prev_in = cur, cur_in
        pts = out
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def _x_cross(p: tuple[float, float], q: tuple[float, float], x: float) -> tuple[float, float]:
    t = (x - p[0]) / (q[0] - p[0])
    return (x, p[1] + t * (q[1] - p[1]))


def _y_cross(p: tuple[float, float], q: tuple[float, float], y: float) -> tuple[float, float]:
    t = (y - p[1]) / (q[1] - p[1])
    return (p[0] + t * (q[0] - p[0]), y)
