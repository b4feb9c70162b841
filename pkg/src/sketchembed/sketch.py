"""Vector sketch type and the relative stroke formats derived from it.

A sketch is an ordered list of strokes; each stroke is an ordered polyline
of absolute (x, y) points with y growing downward (QuickDraw convention).
Two derived views are used by the models:

* stroke-3: rows ``(dx, dy, p)`` where ``p=1`` flags the last point of a
  stroke (pen lift).  Cumulative summation from an origin reproduces the
  absolute points exactly.
* stroke-5: rows ``(dx, dy, p1, p2, p3)`` with one-hot pen states
  draw / lift / end-of-sketch, padded to a fixed length.  Rows after the
  terminator are ``(0, 0, 0, 0, 1)`` so padding is self-describing.
"""

from __future__ import annotations

import dataclasses

import numpy as np


class SketchError(ValueError):
    """Raised for malformed sketches or stroke sequences."""


@dataclasses.dataclass(frozen=True)
class Sketch:
    """Immutable vector sketch: ordered strokes of absolute points."""

    strokes: tuple[np.ndarray, ...]
    label: int | None = None
    source_id: str | None = None

    def __post_init__(self):
        if len(self.strokes) == 0:
            raise SketchError("sketch must have at least one stroke")
        frozen = []
        for i, stroke in enumerate(self.strokes):
            arr = np.asarray(stroke, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
                raise SketchError(f"stroke {i} must be an (n, 2) array with n >= 1")
            if not np.all(np.isfinite(arr)):
                raise SketchError(f"stroke {i} has non-finite coordinates")
            arr = arr.copy()
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "strokes", tuple(frozen))

    @property
    def n_points(self) -> int:
        return sum(len(s) for s in self.strokes)

    def points(self) -> np.ndarray:
        """All points concatenated in drawing order, shape (n_points, 2)."""
        return np.concatenate(self.strokes, axis=0)

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) over all points."""
        pts = self.points()
        xmin, ymin = pts.min(axis=0)
        xmax, ymax = pts.max(axis=0)
        return float(xmin), float(ymin), float(xmax), float(ymax)

    def translated(self, dx: float, dy: float) -> "Sketch":
        return Sketch(
            tuple(s + np.array([dx, dy]) for s in self.strokes),
            label=self.label,
            source_id=self.source_id,
        )


def to_stroke3(sketch: Sketch) -> np.ndarray:
    """Convert a sketch to stroke-3 rows (dx, dy, pen_lift).

    The first row is (0, 0, .) relative to the first point, which serves as
    the implicit origin; pass it back to :func:`from_stroke3` to recover the
    sketch exactly.
    """
    pts = sketch.points()
    offsets = np.diff(pts, axis=0, prepend=pts[:1])
    pen = np.zeros(len(pts))
    end = -1
    for stroke in sketch.strokes:
        end += len(stroke)
        pen[end] = 1.0
    return np.column_stack([offsets, pen])


def from_stroke3(
    seq: np.ndarray,
    origin: tuple[float, float] = (0.0, 0.0),
    label: int | None = None,
) -> Sketch:
    """Rebuild a sketch from stroke-3 rows by cumulative summation.

    ``origin`` is the absolute position the first offset is relative to.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != 3:
        raise SketchError("stroke-3 sequence must be an (n, 3) array")
    if len(seq) == 0:
        raise SketchError("cannot build a sketch from an empty stroke-3 sequence")
    pts = np.cumsum(seq[:, :2], axis=0) + np.asarray(origin, dtype=np.float64)
    strokes = []
    start = 0
    for i, p in enumerate(seq[:, 2]):
        if p == 1.0:
            strokes.append(pts[start : i + 1])
            start = i + 1
    if start < len(pts):  # trailing stroke without an explicit lift
        strokes.append(pts[start:])
    return Sketch(tuple(strokes), label=label)


def to_stroke5(seq: np.ndarray, max_len: int) -> np.ndarray:
    """Pack stroke-3 rows into the fixed-length stroke-5 format.

    Output has ``max_len`` rows: the content rows with one-hot pen states
    (p1=draw, p2=lift), then a terminator row (0,0,0,0,1), then identical
    padding rows.
    """
    seq = np.asarray(seq, dtype=np.float64)
    n = len(seq)
    if n + 1 > max_len:
        raise SketchError(
            f"stroke-3 sequence needs {n + 1} stroke-5 rows but max_len={max_len}"
        )
    out = np.zeros((max_len, 5))
    out[:n, :2] = seq[:, :2]
    lifted = seq[:, 2] == 1.0
    out[:n, 2] = ~lifted  # p1: pen stays down
    out[:n, 3] = lifted  # p2: pen lifts after this point
    out[n:, 4] = 1.0  # terminator row and self-describing padding
    return out


def from_stroke5(rows: np.ndarray) -> np.ndarray:
    """Invert :func:`to_stroke5`, dropping the terminator and padding."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 5:
        raise SketchError("stroke-5 sequence must be an (n, 5) array")
    pen_sum = rows[:, 2:].sum(axis=1)
    if not np.all(pen_sum == 1.0):
        raise SketchError("stroke-5 pen states must be one-hot per row")
    terminators = np.flatnonzero(rows[:, 4] == 1.0)
    n = terminators[0] if len(terminators) else len(rows)
    content = rows[:n]
    return np.column_stack([content[:, :2], content[:, 3]])


def normalize_offsets(seq: np.ndarray, offset_scale: float) -> np.ndarray:
    """Divide the (dx, dy) columns by the dataset offset scale."""
    if offset_scale <= 0:
        raise SketchError("offset_scale must be positive")
    out = np.array(seq, dtype=np.float64)
    out[:, :2] /= offset_scale
    return out


def denormalize_offsets(seq: np.ndarray, offset_scale: float) -> np.ndarray:
    """Inverse of :func:`normalize_offsets`."""
    if offset_scale <= 0:
        raise SketchError("offset_scale must be positive")
    out = np.array(seq, dtype=np.float64)
    out[:, :2] *= offset_scale
    return out


def shuffle_strokes(seq: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Permute stroke order in a stroke-3 sequence, preserving geometry.

    Strokes are reconstructed in absolute coordinates, reordered, and
    re-encoded, so every stroke keeps its exact absolute shape and position;
    only inter-stroke travel offsets are recomputed.  The first row of the
    result carries the displacement from the original origin to the new
    first stroke.
    """
    sketch = from_stroke3(seq)
    order = rng.permutation(len(sketch.strokes))
    shuffled = Sketch(tuple(sketch.strokes[i] for i in order))
    out = to_stroke3(shuffled)
    out[0, :2] = shuffled.strokes[0][0]  # keep absolute placement from origin (0,0)
    return out
