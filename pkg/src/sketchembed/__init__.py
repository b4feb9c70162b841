"""sketchembed: stroke-sequence transformer autoencoder with a fixed-size sketch embedding.

The pipeline: vector sketches are simplified and converted to relative
stroke formats, tokenized (learned codebook or spatial grid) or packed as
continuous rows, run through a transformer autoencoder whose encoder output
is pooled by a learned attention layer into a single embedding vector, and
that embedding drives classification, reconstruction, interpolation, and
cross-modal retrieval.
"""

from sketchembed.sketch import (
    Sketch,
    SketchError,
    from_stroke3,
    from_stroke5,
    normalize_offsets,
    denormalize_offsets,
    shuffle_strokes,
    to_stroke3,
    to_stroke5,
)
from sketchembed.tokens import PAD, SOS, EOS, SEP, GridSpec, TokenSequence
from sketchembed.codebook import Codebook, fit_codebook, dict_encode, dict_decode

__all__ = [
    "Sketch",
    "SketchError",
    "from_stroke3",
    "from_stroke5",
    "normalize_offsets",
    "denormalize_offsets",
    "shuffle_strokes",
    "to_stroke3",
    "to_stroke5",
    "PAD",
    "SOS",
    "EOS",
    "SEP",
    "GridSpec",
    "TokenSequence",
    "Codebook",
    "fit_codebook",
    "dict_encode",
    "dict_decode",
]

__version__ = "0.1.0"
