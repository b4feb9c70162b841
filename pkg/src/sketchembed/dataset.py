"""Dataset assembly and the binary stroke-3 cache.

Cache layout (magic ``SKDS1``, all integers little-endian):

    bytes 0-4   magic b"SKDS1"
    u32         metadata JSON length, then that many UTF-8 bytes
                (rdp_epsilon, offset_scale, class_names, split_sizes, canvas)
    u32         item count
    per item    i32 label (-1 for none), u32 point count,
                then points x 3 float32 rows (dx, dy, pen)

Items are stored train split first, then test split.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from sketchembed.simplify import simplify_sketch
from sketchembed.sketch import Sketch, from_stroke3, to_stroke3
from sketchembed import synth

MAGIC = b"SKDS1"


def sketch_of_item(item: np.ndarray, canvas: tuple[float, float] = (255.0, 255.0),
                   label: int | None = None) -> Sketch:
    """Rebuild an absolute sketch from a cached stroke-3 item.

    Stroke-3 drops the absolute origin, so the rebuilt sketch is
    recentered on the canvas midpoint.  Every consumer of cached items
    (training, CLI, service) must share this convention or grid tokens
    will disagree.
    """
    sketch = from_stroke3(item, label=label)
    x0, y0, x1, y1 = sketch.bounds()
    return sketch.translated(canvas[0] / 2 - (x0 + x1) / 2, canvas[1] / 2 - (y0 + y1) / 2)


class CacheError(ValueError):
    """Raised for unreadable or malformed cache files."""


@dataclasses.dataclass
class DatasetMeta:
    rdp_epsilon: float
    offset_scale: float
    class_names: list[str]
    split_sizes: dict[str, int]
    canvas: tuple[float, float] = (255.0, 255.0)

    def __post_init__(self):
        if self.offset_scale <= 0:
            raise ValueError("offset_scale must be positive")


@dataclasses.dataclass
class SketchDataset:
    """Simplified stroke-3 items plus the metadata needed to invert them."""

    meta: DatasetMeta
    items: list[np.ndarray]
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.items)

    def split(self, name: str) -> tuple[list[np.ndarray], np.ndarray]:
        n_train = self.meta.split_sizes.get("train", len(self.items))
        if name == "train":
            return self.items[:n_train], self.labels[:n_train]
        if name == "test":
            return self.items[n_train:], self.labels[n_train:]
        raise KeyError(f"unknown split {name!r}")

    def item_ids(self, split: str) -> list[str]:
        start = 0 if split == "train" else self.meta.split_sizes.get("train", len(self.items))
        items, _ = self.split(split)
        return [f"{split}/{start + i:05d}" for i in range(len(items))]


def offset_scale_of(items: list[np.ndarray]) -> float:
    """Standard deviation of all (dx, dy) components pooled over items."""
    offsets = np.concatenate([item[:, :2].ravel() for item in items])
    scale = float(offsets.std())
    if scale == 0.0:
        raise ValueError("degenerate corpus: zero offset variance")
    return scale


def build_dataset(
    sketches: list[Sketch],
    rdp_epsilon: float = 2.0,
    train_fraction: float = 0.9,
    seed: int = 0,
    class_names: list[str] | None = None,
) -> SketchDataset:
    """Simplify, convert to stroke-3, shuffle, split, and compute the scale."""
    if not sketches:
        raise ValueError("no sketches to build a dataset from")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sketches))
    items, labels = [], []
    for idx in order:
        sketch = simplify_sketch(sketches[idx], rdp_epsilon)
        items.append(to_stroke3(sketch))
        labels.append(-1 if sketch.label is None else sketch.label)
    n_train = int(round(train_fraction * len(items)))
    n_train = min(max(n_train, 1), len(items))
    meta = DatasetMeta(
        rdp_epsilon=rdp_epsilon,
        offset_scale=offset_scale_of(items[:n_train]),
        class_names=class_names or [],
        split_sizes={"train": n_train, "test": len(items) - n_train},
    )
    return SketchDataset(meta, items, np.asarray(labels, dtype=np.int32))


def synth_dataset(
    train_per_class: int,
    test_per_class: int,
    seed: int = 0,
    rdp_epsilon: float = 2.0,
) -> SketchDataset:
    """Build a dataset from the synthetic corpus with a clean split.

    Train and test items come from disjoint per-item seed ranges, so the
    split is leak-free by construction.
    """
    train = synth.synth_corpus(train_per_class, seed=seed, start=0)
    test = synth.synth_corpus(test_per_class, seed=seed, start=train_per_class)
    rng = np.random.default_rng(seed)
    train = [train[i] for i in rng.permutation(len(train))]
    test = [test[i] for i in rng.permutation(len(test))]
    items = [to_stroke3(simplify_sketch(s, rdp_epsilon)) for s in train + test]
    labels = np.asarray([s.label for s in train + test], dtype=np.int32)
    meta = DatasetMeta(
        rdp_epsilon=rdp_epsilon,
        offset_scale=offset_scale_of(items[: len(train)]),
        class_names=list(synth.CLASS_NAMES),
        split_sizes={"train": len(train), "test": len(test)},
    )
    return SketchDataset(meta, items, labels)


def save_cache(path: str | Path, dataset: SketchDataset) -> None:
    meta = dataset.meta
    meta_json = json.dumps(
        {
            "rdp_epsilon": meta.rdp_epsilon,
            "offset_scale": meta.offset_scale,
            "class_names": meta.class_names,
            "split_sizes": meta.split_sizes,
            "canvas": list(meta.canvas),
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(MAGIC)
        fp.write(struct.pack("<I", len(meta_json)))
        fp.write(meta_json)
        fp.write(struct.pack("<I", len(dataset.items)))
        for item, label in zip(dataset.items, dataset.labels):
            rows = np.ascontiguousarray(item, dtype="<f4")
            fp.write(struct.pack("<iI", int(label), len(rows)))
            fp.write(rows.tobytes())


def load_cache(path: str | Path) -> SketchDataset:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CacheError(f"cannot read cache {path}: {exc}") from exc
    if blob[:5] != MAGIC:
        raise CacheError(f"{path} is not a SKDS1 dataset cache")
    off = 5
    (meta_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    meta_raw = json.loads(blob[off : off + meta_len].decode("utf-8"))
    off += meta_len
    meta = DatasetMeta(
        rdp_epsilon=meta_raw["rdp_epsilon"],
        offset_scale=meta_raw["offset_scale"],
        class_names=meta_raw["class_names"],
        split_sizes=meta_raw["split_sizes"],
        canvas=tuple(meta_raw.get("canvas", (255.0, 255.0))),
    )
    (n_items,) = struct.unpack_from("<I", blob, off)
    off += 4
    items, labels = [], []
    for _ in range(n_items):
        label, n_points = struct.unpack_from("<iI", blob, off)
        off += 8
        rows = np.frombuffer(blob, dtype="<f4", count=n_points * 3, offset=off)
        off += n_points * 3 * 4
        items.append(rows.reshape(n_points, 3).astype(np.float64))
        labels.append(label)
    if off != len(blob):
        raise CacheError(f"{path} has {len(blob) - off} trailing bytes")
    return SketchDataset(meta, items, np.asarray(labels, dtype=np.int32))
