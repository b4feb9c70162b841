"""End-to-end glue: raw sketch in, embedding or sketch back out.

A pipeline owns a trained model, the tokenizer state it was trained
with, and the preprocessing constants (simplification epsilon, offset
scale, canvas). The CLI, the HTTP service, and the estimator facade all
delegate here, which is what keeps their outputs identical.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from sketchembed import tokens
from sketchembed.codebook import Codebook, dict_decode, dict_encode, load_codebook
from sketchembed.embedding import classify, interpolation_grid, perturb, slerp
from sketchembed.model.checkpoint import load_checkpoint
from sketchembed.model.network import SketchTransformer
from sketchembed.simplify import simplify_sketch
from sketchembed.sketch import (
    Sketch,
    denormalize_offsets,
    from_stroke3,
    normalize_offsets,
    to_stroke3,
    to_stroke5,
)
from sketchembed.tokens import GridSpec, TokenSequence, grid_decode, grid_encode


class PipelineError(ValueError):
    pass


@dataclasses.dataclass
class SketchPipeline:
    model: SketchTransformer
    codec: Codebook | GridSpec | None
    offset_scale: float = 1.0
    rdp_epsilon: float = 2.0
    class_names: tuple[str, ...] = ()
    canvas: tuple[float, float] = (255.0, 255.0)

    def __post_init__(self):
        mode = self.model.cfg.mode
        if mode == "tokenized":
            if self.codec is None:
                raise PipelineError("tokenized model needs a codebook or grid spec")
            if self.codec.vocab_size != self.model.cfg.vocab_size:
                raise PipelineError(
                    f"codec vocab {self.codec.vocab_size} != model vocab {self.model.cfg.vocab_size}"
                )
        elif self.codec is not None:
            raise PipelineError("continuous model takes no codec")

    @property
    def scheme(self) -> str:
        if isinstance(self.codec, Codebook):
            return "dict"
        if isinstance(self.codec, GridSpec):
            return "grid"
        return "continuous"

    # ---- sketch -> model input -----------------------------------------

    def prepare(self, sketch: Sketch) -> np.ndarray:
        """Simplify and encode one sketch as a 1-item model batch."""
        simplified = simplify_sketch(sketch, self.rdp_epsilon)
        max_len = self.model.cfg.max_len
        if isinstance(self.codec, GridSpec):
            seq = grid_encode(simplified, self.codec, None)
            ids = seq.ids
            if len(ids) > max_len:
                raise PipelineError(f"sketch needs {len(ids)} tokens, limit {max_len}")
            return ids[None, :]
        s3 = to_stroke3(simplified)
        if isinstance(self.codec, Codebook):
            ids = dict_encode(s3, self.codec).ids
            if len(ids) > max_len:
                raise PipelineError(f"sketch needs {len(ids)} tokens, limit {max_len}")
            return ids[None, :]
        rows = to_stroke5(normalize_offsets(s3, self.offset_scale), len(s3) + 1)
        return rows[None].astype(self.model.cfg.np_dtype)

    def embed(self, sketch: Sketch) -> np.ndarray:
        z, _, _ = self.model.encode(self.prepare(sketch))
        return z[0]

    def embed_many(self, sketches: list[Sketch]) -> np.ndarray:
        return np.stack([self.embed(s) for s in sketches])

    # ---- embedding -> sketch ---------------------------------------------

    def decode(self, z: np.ndarray, max_steps: int | None = None) -> Sketch:
        """Greedy-decode z back into a sketch.

        Dict and continuous decodes carry no absolute position, so the
        result is recentered on the canvas midpoint.
        """
        generated = self.model.autoregress(np.asarray(z), max_steps)[0]
        if self.model.cfg.mode == "tokenized":
            ids = generated
            if tokens.EOS not in ids:
                ids = np.concatenate([ids, [tokens.EOS]])
            seq = TokenSequence(ids, self.model.cfg.vocab_size)
            if isinstance(self.codec, GridSpec):
                return grid_decode(seq, self.codec)
            sketch = from_stroke3(dict_decode(seq, self.codec))
        else:
            rows = generated
            terminators = np.flatnonzero(rows[:, 4] > 0.5)
            if len(terminators):
                rows = rows[: terminators[0]]
            if not len(rows):
                raise PipelineError("decoder emitted an empty sequence")
            s3 = np.column_stack([rows[:, :2], rows[:, 3]])
            s3[-1, 2] = 1.0
            sketch = from_stroke3(denormalize_offsets(s3, self.offset_scale))
        return self._recenter(sketch)

    def _recenter(self, sketch: Sketch) -> Sketch:
        x0, y0, x1, y1 = sketch.bounds()
        return sketch.translated(
            self.canvas[0] / 2 - (x0 + x1) / 2, self.canvas[1] / 2 - (y0 + y1) / 2
        )

    # ---- applications ------------------------------------------------------

    def reconstruct(self, sketch: Sketch) -> Sketch:
        return self.decode(self.embed(sketch))

    def interpolate(self, a: Sketch, b: Sketch, steps: int = 10) -> list[Sketch]:
        za, zb = self.embed(a), self.embed(b)
        return [self.decode(slerp(za, zb, float(t))) for t in interpolation_grid(steps)]

    def perturb_sketch(self, sketch: Sketch, sigma: float, seed: int = 0) -> Sketch:
        z = perturb(self.embed(sketch), sigma, np.random.default_rng(seed))
        return self.decode(z)

    def classify_sketch(self, sketch: Sketch) -> tuple[str, np.ndarray]:
        if self.model.classifier is None:
            raise PipelineError("model was trained without a classifier head")
        cid, probs = classify(self.embed(sketch), self.model.classifier)
        name = self.class_names[cid] if cid < len(self.class_names) else str(cid)
        return name, probs

    # ---- persistence ---------------------------------------------------------

    def train_meta(self) -> dict[str, str]:
        return {
            "scheme": self.scheme,
            "offset_scale": repr(self.offset_scale),
            "rdp_epsilon": repr(self.rdp_epsilon),
            "class_names": json.dumps(list(self.class_names)),
            "canvas": json.dumps(list(self.canvas)),
            "grid_side": str(getattr(self.codec, "side", 0)),
        }


def load_pipeline(checkpoint_path: str | Path, codebook_path: str | Path | None = None) -> SketchPipeline:
    model, _, meta = load_checkpoint(checkpoint_path)
    scheme = meta.get("scheme", "continuous")
    codec = None
    if scheme == "dict":
        if codebook_path is None:
            raise PipelineError("checkpoint was trained with a codebook; pass its path")
        codec = load_codebook(codebook_path)
    elif scheme == "grid":
        canvas = tuple(json.loads(meta.get("canvas", "[255.0, 255.0]")))
        codec = GridSpec(side=int(meta["grid_side"]), canvas=canvas)
    return SketchPipeline(
        model=model,
        codec=codec,
        offset_scale=float(meta.get("offset_scale", "1.0")),
        rdp_epsilon=float(meta.get("rdp_epsilon", "2.0")),
        class_names=tuple(json.loads(meta.get("class_names", "[]"))),
        canvas=tuple(json.loads(meta.get("canvas", "[255.0, 255.0]"))),
    )
