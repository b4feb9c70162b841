"""Operations on embedding vectors: interpolation, noise, retrieval.

Everything here is plain vector math, independent of how the embedding
was produced. Retrieval is exact brute force by contract.
"""

from __future__ import annotations

import dataclasses
import json
import warnings

import numpy as np

from sketchembed.container import load_container, save_container

MAGIC = b"SKEM1"


def slerp(z1: np.ndarray, z2: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation along the great circle through z1, z2.

    Falls back to linear interpolation when the angle is below 1e-6, where
    the sine ratio becomes ill-conditioned.
    """
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    n1 = np.linalg.norm(z1)
    n2 = np.linalg.norm(z2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("slerp endpoints must be nonzero")
    if t == 0.0:
        return z1.copy()
    if t == 1.0:
        return z2.copy()
    cos_omega = np.clip(np.dot(z1, z2) / (n1 * n2), -1.0, 1.0)
    omega = np.arccos(cos_omega)
    if omega < 1e-6:
        return (1.0 - t) * z1 + t * z2
    sin_omega = np.sin(omega)
    return (np.sin((1.0 - t) * omega) * z1 + np.sin(t * omega) * z2) / sin_omega


def interpolation_grid(steps: int) -> np.ndarray:
    """Uniform t values including both endpoints."""
    if steps < 2:
        raise ValueError("need at least the two endpoints")
    return np.linspace(0.0, 1.0, steps)


def perturb(z: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add isotropic Gaussian noise; sigma=0 returns z unchanged."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    z = np.asarray(z, dtype=np.float64)
    if sigma == 0.0:
        return z.copy()
    return z + rng.normal(0.0, sigma, size=z.shape)


def classify(z: np.ndarray, classifier) -> tuple[int, np.ndarray]:
    """Class id and softmax probabilities from a trained head."""
    logits = classifier.forward(np.atleast_2d(z))[0]
    shifted = logits - logits.max()
    probs = np.exp(shifted)
    probs /= probs.sum()
    return int(logits.argmax()), probs


@dataclasses.dataclass(frozen=True)
class EmbeddingIndex:
    """Immutable brute-force index over item embeddings."""

    matrix: np.ndarray
    ids: tuple[str, ...]
    metric: str = "cosine"

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or len(matrix) != len(self.ids):
            raise ValueError("matrix rows must match id count")
        if len(matrix) == 0:
            raise ValueError("empty index")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("index entries must be finite")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        if self.metric not in ("cosine", "euclidean"):
            raise ValueError(f"unknown metric {self.metric!r}")

    def __len__(self) -> int:
        return len(self.ids)

    def scores(self, query: np.ndarray) -> np.ndarray:
        """Similarity of every item to the query; higher is closer.

        Euclidean scores are negated distances so both metrics rank by
        descending score.
        """
        query = np.asarray(query, dtype=np.float64)
        if self.metric == "cosine":
            qn = np.linalg.norm(query)
            mn = np.linalg.norm(self.matrix, axis=1)
            denom = np.where(mn * qn > 0, mn * qn, 1.0)
            return (self.matrix @ query) / denom
        return -np.linalg.norm(self.matrix - query, axis=1)


def knn(index: EmbeddingIndex, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exact top-k by score, ties broken by item id ascending."""
    if not 1 <= k <= len(index):
        raise ValueError(f"k must be in [1, {len(index)}]")
    scores = index.scores(query)
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(scores[i])) for i in order[:k]]


def average_precision(relevant: np.ndarray) -> float:
    """AP of a ranking given its per-rank relevance flags.

    Mean of precision-at-rank over the relevant ranks; 0 (with a warning)
    when nothing is relevant.
    """
    relevant = np.asarray(relevant, dtype=bool)
    if not relevant.any():
        warnings.warn("average_precision of a ranking with no relevant items is 0")
        return 0.0
    ranks = np.flatnonzero(relevant) + 1
    hits = np.arange(1, len(ranks) + 1)
    return float((hits / ranks).mean())


def mean_ap(rankings: list[np.ndarray]) -> float:
    return float(np.mean([average_precision(r) for r in rankings]))


def precision_at_k(relevant: np.ndarray, k: int) -> float:
    relevant = np.asarray(relevant, dtype=bool)
    if k < 1:
        raise ValueError("k must be at least 1")
    return float(relevant[:k].sum() / k)


def save_embeddings(path, index: EmbeddingIndex) -> None:
    meta = {"metric": index.metric, "ids": json.dumps(list(index.ids))}
    save_container(path, MAGIC, meta, {"matrix": index.matrix})


def load_embeddings(path) -> EmbeddingIndex:
    meta, tensors = load_container(path, MAGIC)
    return EmbeddingIndex(
        matrix=tensors["matrix"].astype(np.float64),
        ids=tuple(json.loads(meta["ids"])),
        metric=meta.get("metric", "cosine"),
    )
