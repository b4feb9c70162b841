from __future__ import annotations

import dataclasses
import math

import numpy as np


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the autoencoder.

    mode "tokenized" consumes discrete token ids and emits vocabulary
    logits; mode "continuous" consumes stroke-5 rows and emits (dx, dy)
    plus 3 pen logits per position.
    """

    mode: str = "tokenized"
    vocab_size: int = 1004
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 8
    d_ff: int = 512
    max_len: int = 200
    dropout: float = 0.1
    n_classes: int = 0
    expand_mode: str = "affine"
    dtype: str = "float32"

    def __post_init__(self):
        if self.mode not in ("tokenized", "continuous"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.expand_mode not in ("affine", "tile"):
            raise ValueError(f"unknown expand_mode {self.expand_mode!r}")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.mode == "tokenized" and self.vocab_size < 5:
            raise ValueError("tokenized mode needs vocab_size >= 5")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def alpha(self) -> float:
        """Attention score scale, the reciprocal root of the head width."""
        return 1.0 / math.sqrt(self.d_head)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in fields})
