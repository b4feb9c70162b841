"""Ramer-Douglas-Peucker polyline simplification."""

from __future__ import annotations

import numpy as np

from sketchembed.sketch import Sketch


def _deviations(points: np.ndarray, first: int, last: int) -> np.ndarray:
    """Perpendicular distance of interior points from the chord first->last.

    Falls back to point distance when the chord endpoints coincide.
    """
    interior = points[first + 1 : last]
    a = points[first]
    b = points[last]
    chord = b - a
    length = np.hypot(*chord)
    if length == 0.0:
        return np.hypot(*(interior - a).T)
    cross = np.abs(chord[0] * (a[1] - interior[:, 1]) - (a[0] - interior[:, 0]) * chord[1])
    return cross / length


def rdp_simplify(polyline: np.ndarray, epsilon: float) -> np.ndarray:
    """Simplify a polyline, keeping endpoints and every point that deviates
    from its chord by at least ``epsilon``.

    Removal uses a strict ``< epsilon`` test, so ``epsilon=0`` returns the
    input unchanged and the operation is idempotent.  Runs on an explicit
    stack to handle long polylines.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    points = np.asarray(polyline, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("polyline must be an (n, 2) array")
    n = len(points)
    if n < 3:
        return points.copy()

    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue
        dev = _deviations(points, first, last)
        idx = int(np.argmax(dev))
        if dev[idx] < epsilon:
            continue  # whole span within tolerance: interior points dropped
        split = first + 1 + idx
        keep[split] = True
        stack.append((first, split))
        stack.append((split, last))
    return points[keep]


def simplify_sketch(sketch: Sketch, epsilon: float) -> Sketch:
    """Apply RDP per stroke."""
    return Sketch(
        tuple(rdp_simplify(s, epsilon) for s in sketch.strokes),
        label=sketch.label,
        source_id=sketch.source_id,
    )
