"""Model checkpoints: config, parameters, and optional optimizer state.

All tensors live in the file as float32; a float64 model is narrowed on
save. Training metadata rides along as manifest entries prefixed
"train.", optimizer moments as tensors prefixed "opt_m."/"opt_v.".
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from sketchembed.container import ContainerError, load_container, save_container
from sketchembed.model.config import ModelConfig

MAGIC = b"SKFM1"

_CONFIG_TYPES = {
    "mode": str,
    "vocab_size": int,
    "d_model": int,
    "n_layers": int,
    "n_heads": int,
    "d_ff": int,
    "max_len": int,
    "dropout": float,
    "n_classes": int,
    "expand_mode": str,
    "dtype": str,
}


def save_checkpoint(
    path: str | Path,
    model,
    opt_state=None,
    train_meta: dict[str, str] | None = None,
) -> None:
    meta: dict[str, str] = {}
    for key, value in model.cfg.to_dict().items():
        meta[f"config.{key}"] = repr(value) if isinstance(value, float) else str(value)
    for key, value in (train_meta or {}).items():
        meta[f"train.{key}"] = str(value)
    tensors = {f"param.{name}": value for name, value in model.param_items()}
    if opt_state is not None:
        meta["opt.step"] = str(opt_state.step)
        for name, m in opt_state.m.items():
            tensors[f"opt_m.{name}"] = m
        for name, v in opt_state.v.items():
            tensors[f"opt_v.{name}"] = v
    save_container(path, MAGIC, meta, tensors)


def load_checkpoint(path: str | Path):
    """Returns (model, opt_arrays, train_meta).

    opt_arrays is None when the file has no optimizer state, otherwise a
    dict with "step", "m", and "v" for the optimizer to adopt.
    """
    from sketchembed.model.network import SketchTransformer

    meta, tensors = load_container(path, MAGIC)
    cfg_raw = {}
    for key, caster in _CONFIG_TYPES.items():
        if f"config.{key}" not in meta:
            raise ContainerError(f"checkpoint missing config.{key}")
        cfg_raw[key] = caster(meta[f"config.{key}"])
    cfg = ModelConfig(**cfg_raw)
    model = SketchTransformer(cfg, seed=0)
    dtype = cfg.np_dtype
    state = {
        name[6:]: tensors[name].astype(dtype)
        for name in tensors
        if name.startswith("param.")
    }
    model.load_state(state)
    opt_arrays = None
    if "opt.step" in meta:
        opt_arrays = {
            "step": int(meta["opt.step"]),
            "m": {n[6:]: tensors[n].astype(dtype) for n in tensors if n.startswith("opt_m.")},
            "v": {n[6:]: tensors[n].astype(dtype) for n in tensors if n.startswith("opt_v.")},
        }
    train_meta = {k[6:]: v for k, v in meta.items() if k.startswith("train.")}
    return model, opt_arrays, train_meta


def checkpoint_config(path: str | Path) -> ModelConfig:
    """Read only the config block, without materializing parameters."""
    meta, _ = load_container(path, MAGIC)
    raw = {k: _CONFIG_TYPES[k](v) for k, v in
           ((key[7:], val) for key, val in meta.items() if key.startswith("config."))
           if k in _CONFIG_TYPES}
    return ModelConfig(**raw)
