"""Sequence autoencoder with an attention-pooled bottleneck.

Forward and backward passes are written directly in numpy; gradients are
exact for the composed computation, which the finite-difference tests
enforce coordinate by coordinate.
"""

from sketchembed.model.config import ModelConfig
from sketchembed.model.network import SketchTransformer
from sketchembed.model.checkpoint import load_checkpoint, save_checkpoint

__all__ = ["ModelConfig", "SketchTransformer", "load_checkpoint", "save_checkpoint"]
