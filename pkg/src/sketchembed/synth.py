"""Deterministic synthetic sketch corpus (no downloads needed in CI).

Five shape classes drawn on the 0-255 canvas with seeded jitter in center,
size, rotation, and per-point noise.  Coordinates are rounded to the
integer grid, matching the QuickDraw interchange convention and keeping the
relative-offset round trips exact in float64.
"""

from __future__ import annotations

import numpy as np

from sketchembed.sketch import Sketch

CLASS_NAMES = ("circle", "square", "triangle", "zigzag", "star")
CANVAS = 255.0


def _interp(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return a + t * (b - a)


def _rot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def synth_sketch(class_id: int | str, rng_seed: int) -> Sketch:
    """Generate one jittered parametric sketch; same seed, same sketch."""
    if isinstance(class_id, str):
        if class_id not in CLASS_NAMES:
            raise ValueError(f"unknown class {class_id!r}; expected one of {CLASS_NAMES}")
        label = CLASS_NAMES.index(class_id)
    else:
        label = int(class_id)
        if not 0 <= label < len(CLASS_NAMES):
            raise ValueError(f"class id must be in [0, {len(CLASS_NAMES)})")
    rng = np.random.default_rng(rng_seed)
    center = 127.5 + rng.uniform(-15, 15, size=2)
    size = rng.uniform(55, 90)
    name = CLASS_NAMES[label]

    if name == "circle":
        theta = np.linspace(0.0, 2 * np.pi, 25) + rng.uniform(0, 2 * np.pi)
        aspect = rng.uniform(0.85, 1.15)
        pts = center + size * np.column_stack([np.cos(theta), aspect * np.sin(theta)])
        strokes = [pts]
    elif name == "square":
        corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * size
        corners = corners @ _rot(rng.uniform(-0.15, 0.15)).T + center
        strokes = [
            _interp(corners[i], corners[(i + 1) % 4], 6) for i in range(4)
        ]
    elif name == "triangle":
        theta = rng.uniform(0, 2 * np.pi / 3) + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3]) - np.pi / 2
        verts = center + size * np.column_stack([np.cos(theta), np.sin(theta)])
        strokes = [_interp(verts[i], verts[(i + 1) % 3], 7) for i in range(3)]
    elif name == "zigzag":
        n_apex = 7
        xs = np.linspace(-size, size, n_apex)
        ys = np.where(np.arange(n_apex) % 2 == 0, -0.6 * size, 0.6 * size)
        apex = np.column_stack([xs, ys]) @ _rot(rng.uniform(-0.2, 0.2)).T + center
        parts = [_interp(apex[i], apex[i + 1], 4)[:-1] for i in range(n_apex - 1)]
        strokes = [np.vstack(parts + [apex[-1:]])]
    else:  # star
        outer = np.arange(5) * 2 * np.pi / 5 - np.pi / 2 + rng.uniform(-0.2, 0.2)
        inner = outer + np.pi / 5
        verts = np.empty((11, 2))
        verts[0:10:2] = np.column_stack([np.cos(outer), np.sin(outer)]) * size
        verts[1:10:2] = np.column_stack([np.cos(inner), np.sin(inner)]) * 0.45 * size
        verts[10] = verts[0]
        verts = verts + center
        parts = [_interp(verts[i], verts[i + 1], 3)[:-1] for i in range(10)]
        strokes = [np.vstack(parts + [verts[-1:]])]

    jittered = []
    for s in strokes:
        s = s + rng.normal(0.0, 1.2, size=s.shape)
        jittered.append(np.clip(np.rint(s), 0, CANVAS))
    return Sketch(tuple(jittered), label=label, source_id=f"{name}/{rng_seed}")


def synth_corpus(per_class: int, seed: int = 0, start: int = 0) -> list[Sketch]:
    """``per_class`` sketches of every class, with per-item derived seeds."""
    sketches = []
    for label in range(len(CLASS_NAMES)):
        for i in range(start, start + per_class):
            item_seed = np.random.SeedSequence(entropy=seed, spawn_key=(label, i))
            sketches.append(synth_sketch(label, item_seed.generate_state(1)[0]))
    return sketches
