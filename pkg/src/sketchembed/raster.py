"""Deterministic rasterization of sketches and raster fidelity metrics.

The rasterizer walks integer pixels (no anti-aliasing) so identical inputs
produce bit-identical images; the Chamfer metric below tolerates that.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import ndimage

from sketchembed.sketch import Sketch


@dataclasses.dataclass(frozen=True)
class RasterImage:
    """Grayscale intensity grid in [0, 1], shape (height, width)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("raster dimensions must be positive")
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.height, self.width):
            raise ValueError("pixel grid shape must be (height, width)")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    def ink_mask(self) -> np.ndarray:
        return self.pixels > 0.5


def _walk_segment(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer pixels along a segment (Bresenham)."""
    pixels = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        pixels.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return pixels


def rasterize(sketch: Sketch, side: int = 256, line_width: int = 1) -> RasterImage:
    """Draw a sketch onto a side x side canvas.

    The sketch bounding box is fitted into the canvas with a 5% margin,
    aspect preserved and centered; strokes become connected pixel segments
    stamped with a line_width x line_width square.  A single-point sketch
    becomes a dot at the canvas center.
    """
    if side < 16:
        raise ValueError("side must be >= 16")
    if line_width < 1:
        raise ValueError("line_width must be >= 1")
    xmin, ymin, xmax, ymax = sketch.bounds()
    extent = max(xmax - xmin, ymax - ymin)
    usable = 0.9 * (side - 1)
    if extent == 0.0:
        scale = 0.0
    else:
        scale = usable / extent
    cx = (xmin + xmax) / 2.0
    cy = (ymin + ymax) / 2.0
    mid = (side - 1) / 2.0

    grid = np.zeros((side, side))
    half = line_width // 2
    lo, hi = -half, line_width - half
    for stroke in sketch.strokes:
        px = np.rint((stroke[:, 0] - cx) * scale + mid).astype(int)
        py = np.rint((stroke[:, 1] - cy) * scale + mid).astype(int)
        segments = zip(px[:-1], py[:-1], px[1:], py[1:]) if len(stroke) > 1 else [(px[0], py[0], px[0], py[0])]
        for x0, y0, x1, y1 in segments:
            for x, y in _walk_segment(x0, y0, x1, y1):
                ys = slice(max(y + lo, 0), min(y + hi, side))
                xs = slice(max(x + lo, 0), min(x + hi, side))
                grid[ys, xs] = 1.0
    return RasterImage(side, side, grid)


def chamfer_distance(a: RasterImage, b: RasterImage) -> float:
    """Symmetric mean distance between the ink sets of two equal-size images.

    Zero iff the ink sets are identical.  If exactly one image has no ink
    the canvas diagonal is returned as a sentinel; two empty images compare
    equal (0.0).
    """
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("images must have equal dimensions")
    ink_a = a.ink_mask()
    ink_b = b.ink_mask()
    has_a = ink_a.any()
    has_b = ink_b.any()
    if not has_a and not has_b:
        return 0.0
    if not has_a or not has_b:
        return float(np.hypot(a.width, a.height))
    dist_to_b = ndimage.distance_transform_edt(~ink_b)
    dist_to_a = ndimage.distance_transform_edt(~ink_a)
    return float((dist_to_b[ink_a].mean() + dist_to_a[ink_b].mean()) / 2.0)
