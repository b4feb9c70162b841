"""Persistence for the joint retrieval model (raster encoder + heads)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from sketchembed.container import save_container, load_container
from sketchembed.crossmodal.convnet import RasterEncoder, FEATURE_DIM
from sketchembed.crossmodal.joint import JointHeads

MAGIC = b"SKJM1"


def save_joint(path: str | Path, encoder: RasterEncoder, heads: JointHeads,
               vector_dim: int, class_names: list[str]) -> None:
    meta = {
        "vector_dim": str(vector_dim),
        "raster_dim": str(FEATURE_DIM),
        "n_classes": str(heads.aux.P["W"].shape[1]),
        "class_names": json.dumps(list(class_names)),
    }
    tensors = {}
    for name, value in encoder.param_items():
        tensors[f"enc.{name}"] = value
    for name, value in heads.param_items():
        tensors[f"heads.{name}"] = value
    save_container(path, MAGIC, meta, tensors)


def load_joint(path: str | Path):
    """Returns (encoder, heads, meta); both modules come back frozen."""
    meta, tensors = load_container(path, MAGIC)
    encoder = RasterEncoder()
    heads = JointHeads(
        vector_dim=int(meta["vector_dim"]),
        raster_dim=int(meta["raster_dim"]),
        n_classes=int(meta["n_classes"]),
    )
    encoder.load_state({k[4:]: v for k, v in tensors.items() if k.startswith("enc.")})
    heads.load_state({k[6:]: v for k, v in tensors.items() if k.startswith("heads.")})
    encoder.frozen = True
    return encoder, heads, {
        "vector_dim": int(meta["vector_dim"]),
        "raster_dim": int(meta["raster_dim"]),
        "n_classes": int(meta["n_classes"]),
        "class_names": json.loads(meta.get("class_names", "[]")),
    }
