"""scikit-learn style facades over the tokenizers and the trained pipeline.

These wrappers exist for composition with sklearn tooling (grid search,
pipelines, cross-validation); the underlying work is done by the plain
library functions.  X is a list of Sketch objects for the embedder and
the grid tokenizer, and a list of stroke-3 arrays for the dictionary
tokenizer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from sketchembed import codebook as cb_mod
from sketchembed import tokens as tokens_mod
from sketchembed.dataset import offset_scale_of, sketch_of_item
from sketchembed.model.config import ModelConfig
from sketchembed.model.network import SketchTransformer
from sketchembed.pipeline import SketchPipeline
from sketchembed.simplify import simplify_sketch
from sketchembed.sketch import Sketch, to_stroke3
from sketchembed.training import TrainConfig, train_model


def _check_stroke3_list(X) -> list[np.ndarray]:
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise ValueError("X must be a non-empty list of stroke-3 arrays")
    out = []
    for i, item in enumerate(X):
        arr = np.asarray(item, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"X[{i}] is not an (n, 3) stroke-3 array")
        out.append(arr)
    return out


def _check_sketch_list(X) -> list[Sketch]:
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise ValueError("X must be a non-empty list of Sketch objects")
    for i, item in enumerate(X):
        if not isinstance(item, Sketch):
            raise ValueError(f"X[{i}] is not a Sketch")
    return list(X)


class DictionaryTokenizer(BaseEstimator, TransformerMixin):
    """K-means motion codebook as a transformer over stroke-3 arrays."""

    def __init__(self, k: int = 256, sample_size: int = 20_000,
                 lift_fraction: float = 0.2, seed: int = 0,
                 normalize_scale: bool = True):
        self.k = k
        self.sample_size = sample_size
        self.lift_fraction = lift_fraction
        self.seed = seed
        self.normalize_scale = normalize_scale

    def fit(self, X, y=None):
        items = _check_stroke3_list(X)
        scale = offset_scale_of(items) if self.normalize_scale else 1.0
        self.codebook_ = cb_mod.fit_codebook(
            items, k=self.k, sample_size=self.sample_size,
            lift_fraction=self.lift_fraction, seed=self.seed, offset_scale=scale,
        )
        return self

    def transform(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "codebook_")
        return [cb_mod.dict_encode(item, self.codebook_).ids
                for item in _check_stroke3_list(X)]

    def inverse_transform(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "codebook_")
        out = []
        for ids in X:
            seq = tokens_mod.TokenSequence(np.asarray(ids), self.codebook_.vocab_size)
            out.append(cb_mod.dict_decode(seq, self.codebook_))
        return out


class GridTokenizer(BaseEstimator, TransformerMixin):
    """Fixed-canvas cell quantizer; fit only validates parameters."""

    def __init__(self, side: int = 20, canvas: tuple[float, float] = (255.0, 255.0)):
        self.side = side
        self.canvas = canvas

    def fit(self, X=None, y=None):
        self.spec_ = tokens_mod.GridSpec(side=self.side, canvas=tuple(self.canvas))
        return self

    def transform(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "spec_")
        out = []
        for item in X:
            sketch = item if isinstance(item, Sketch) else sketch_of_item(
                np.asarray(item, dtype=np.float64), self.spec_.canvas)
            out.append(tokens_mod.grid_encode(sketch, self.spec_).ids)
        return out

    def inverse_transform(self, X) -> list[Sketch]:
        check_is_fitted(self, "spec_")
        return [tokens_mod.grid_decode(
            tokens_mod.TokenSequence(np.asarray(ids), self.spec_.vocab_size), self.spec_)
            for ids in X]


class SketchEmbedder(BaseEstimator, TransformerMixin):
    """Autoencoder bottleneck as a fit/transform/predict estimator.

    fit trains the full model on the given sketches; transform returns
    the bottleneck matrix; predict requires labels at fit time.
    """

    def __init__(self, scheme: str = "dict", k: int = 256, grid_side: int = 20,
                 rdp_epsilon: float = 2.0, sample_size: int = 20_000,
                 lift_fraction: float = 0.2, d_model: int = 64, n_layers: int = 2,
                 n_heads: int = 4, d_ff: int = 256, max_len: int = 120,
                 dropout: float = 0.0, steps: int = 300, batch_size: int = 32,
                 base_lr: float = 1e-3, warmup: int = 50, lambda_cls: float = 1.0,
                 seed: int = 0):
        self.scheme = scheme
        self.k = k
        self.grid_side = grid_side
        self.rdp_epsilon = rdp_epsilon
        self.sample_size = sample_size
        self.lift_fraction = lift_fraction
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_len = max_len
        self.dropout = dropout
        self.steps = steps
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.warmup = warmup
        self.lambda_cls = lambda_cls
        self.seed = seed

    def fit(self, X, y=None):
        if self.scheme not in ("dict", "grid", "continuous"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        sketches = _check_sketch_list(X)
        labels = None
        n_classes = 0
        if y is not None:
            labels = np.asarray(y, dtype=np.int64)
            if len(labels) != len(sketches):
                raise ValueError("y length must match X")
            if labels.min() < 0:
                raise ValueError("labels must be non-negative")
            n_classes = int(labels.max()) + 1
        items = [to_stroke3(simplify_sketch(s, self.rdp_epsilon)) for s in sketches]
        scale = offset_scale_of(items)
        codec = None
        if self.scheme == "dict":
            codec = cb_mod.fit_codebook(
                items, k=self.k, sample_size=self.sample_size,
                lift_fraction=self.lift_fraction, seed=self.seed, offset_scale=scale,
            )
        elif self.scheme == "grid":
            codec = tokens_mod.GridSpec(side=self.grid_side)
        cfg = ModelConfig(
            mode="continuous" if self.scheme == "continuous" else "tokenized",
            vocab_size=codec.vocab_size if codec is not None else 5,
            d_model=self.d_model, n_layers=self.n_layers, n_heads=self.n_heads,
            d_ff=self.d_ff, max_len=self.max_len, dropout=self.dropout,
            n_classes=n_classes,
        )
        model = SketchTransformer(cfg, seed=self.seed)
        train_cfg = TrainConfig(
            batch_size=self.batch_size, steps=self.steps, lambda_cls=self.lambda_cls,
            base_lr=self.base_lr, warmup=self.warmup, seed=self.seed,
        )
        train_model(model, items, labels, codec, train_cfg, offset_scale=scale)
        self.pipeline_ = SketchPipeline(
            model=model, codec=codec, offset_scale=scale,
            rdp_epsilon=self.rdp_epsilon,
            class_names=tuple(str(c) for c in range(n_classes)),
        )
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "pipeline_")
        return self.pipeline_.embed_many(_check_sketch_list(X))

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "pipeline_")
        if self.pipeline_.model.classifier is None:
            raise NotFittedError("fit with labels to enable predict")
        return np.asarray([int(self.pipeline_.classify_sketch(s)[0])
                           for s in _check_sketch_list(X)], dtype=np.int64)

    def score(self, X, y) -> float:
        return float((self.predict(X) == np.asarray(y)).mean())
