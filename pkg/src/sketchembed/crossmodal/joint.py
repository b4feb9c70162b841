"""Joint vector/raster metric space trained with a two-phase triplet loss.

Both branch encoders are frozen inputs here: sketches arrive as
precomputed bottleneck embeddings, rasters as precomputed conv features.
Only the heads train. Phase one separates categories with margin 0.2;
phase two sharpens instance matching with margin 0.05 and same-category
negatives.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from sketchembed.embedding import EmbeddingIndex, knn
from sketchembed.model.core import Dense, Module
from sketchembed.training import Adam, class_loss

JOINT_DIM = 128
HIDDEN_DIM = 256


class L2Normalize(Module):
    """Project onto the unit sphere; safe backward through the scaling."""

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        norms = np.linalg.norm(x, axis=-1, keepdims=True)
        norms = np.where(norms > 0, norms, 1.0)
        u = x / norms
        if training:
            self._stack.append((u, norms))
        return u

    def backward(self, du: np.ndarray) -> np.ndarray:
        u, norms = self._stack.pop()
        return (du - u * (du * u).sum(axis=-1, keepdims=True)) / norms


class _Branch(Module):
    """Two dense layers, each rectified."""

    def __init__(self, rng, d_in: int, d_out: int, dtype):
        super().__init__()
        self.fc1 = self.add_module("fc1", Dense(rng, d_in, HIDDEN_DIM, dtype))
        self.fc2 = self.add_module("fc2", Dense(rng, HIDDEN_DIM, d_out, dtype))

    def forward(self, x, training=False):
        h = self.fc1.forward(x, training)
        mask1 = h > 0
        out = self.fc2.forward(h * mask1, training)
        mask2 = out > 0
        if training:
            self._stack.append((mask1, mask2))
        return out * mask2

    def backward(self, dout):
        mask1, mask2 = self._stack.pop()
        return self.fc1.backward(self.fc2.backward(dout * mask2) * mask1)


class JointHeads(Module):
    """Domain heads F_V and F_R feeding a shared F_S, unit-normalized.

    Every dense layer is rectified, so the joint space lives on the
    non-negative part of the sphere.
    """

    def __init__(self, vector_dim: int, raster_dim: int, n_classes: int, seed: int = 0, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.fv = self.add_module("fv", _Branch(rng, vector_dim, JOINT_DIM, dtype))
        self.fr = self.add_module("fr", _Branch(rng, raster_dim, JOINT_DIM, dtype))
        self.fs = self.add_module("fs", _Branch(rng, JOINT_DIM, JOINT_DIM, dtype))
        self.norm = self.add_module("norm", L2Normalize())
        self.aux = self.add_module("aux", Dense(rng, JOINT_DIM, n_classes, dtype))

    def embed_vector(self, z: np.ndarray, training: bool = False) -> np.ndarray:
        return self.norm.forward(self.fs.forward(self.fv.forward(z, training), training), training)

    def embed_raster(self, feats: np.ndarray, training: bool = False) -> np.ndarray:
        return self.norm.forward(self.fs.forward(self.fr.forward(feats, training), training), training)

    def backward_vector(self, du: np.ndarray) -> None:
        self.fv.backward(self.fs.backward(self.norm.backward(du)))

    def backward_raster(self, du: np.ndarray) -> None:
        self.fr.backward(self.fs.backward(self.norm.backward(du)))


def triplet_loss(u_a: np.ndarray, u_p: np.ndarray, u_n: np.ndarray, margin: float) -> float:
    """Euclidean hinge max(0, d+ - d- + m), averaged over the batch."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    u_a, u_p, u_n = np.atleast_2d(u_a), np.atleast_2d(u_p), np.atleast_2d(u_n)
    d_p = np.linalg.norm(u_a - u_p, axis=1)
    d_n = np.linalg.norm(u_a - u_n, axis=1)
    return float(np.maximum(d_p - d_n + margin, 0.0).mean())


def triplet_grads(u_a: np.ndarray, u_p: np.ndarray, u_n: np.ndarray, margin: float):
    """Loss plus subgradients w.r.t. all three inputs.

    At d=0 and at the hinge kink the subgradient is taken as 0.
    """
    u_a, u_p, u_n = np.atleast_2d(u_a), np.atleast_2d(u_p), np.atleast_2d(u_n)
    diff_p = u_a - u_p
    diff_n = u_a - u_n
    d_p = np.linalg.norm(diff_p, axis=1)
    d_n = np.linalg.norm(diff_n, axis=1)
    per_item = d_p - d_n + margin
    active = per_item > 0
    loss = float(np.where(active, per_item, 0.0).mean())
    unit_p = diff_p / np.where(d_p > 0, d_p, 1.0)[:, None]
    unit_n = diff_n / np.where(d_n > 0, d_n, 1.0)[:, None]
    scale = (active / len(u_a))[:, None]
    du_p = -unit_p * scale
    du_n = unit_n * scale
    du_a = (unit_p - unit_n) * scale
    return loss, du_a, du_p, du_n


@dataclasses.dataclass(frozen=True)
class TripletBatch:
    """Index triples into parallel embedding/feature/label arrays."""

    anchor_idx: np.ndarray
    positive_idx: np.ndarray
    negative_idx: np.ndarray
    phase: int

    def check(self, labels: np.ndarray) -> None:
        """Assert the phase's category/instance constraints."""
        a, p, n = labels[self.anchor_idx], labels[self.positive_idx], labels[self.negative_idx]
        if not (a == p).all():
            raise ValueError("positive category differs from anchor")
        if self.phase == 1:
            if (a == n).any():
                raise ValueError("phase-1 negative shares the anchor category")
        else:
            if not (a == n).all():
                raise ValueError("phase-2 negative category differs from anchor")
            if not (self.positive_idx == self.anchor_idx).all():
                raise ValueError("phase-2 positive must be the anchor's own instance")
            if (self.negative_idx == self.anchor_idx).any():
                raise ValueError("phase-2 negative must be a different instance")


def sample_triplets(labels: np.ndarray, phase: int, batch_size: int, rng: np.random.Generator) -> TripletBatch:
    """Draw a constraint-satisfying batch of (anchor, positive, negative).

    Phase 1 pairs an anchor with a random same-category raster and a
    different-category negative; phase 2 uses the anchor's own raster as
    positive and hard same-category negatives.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if phase not in (1, 2):
        raise ValueError("phase must be 1 or 2")
    if phase == 1 and len(classes) < 2:
        raise ValueError("phase 1 needs at least two categories")
    by_class = {c: np.flatnonzero(labels == c) for c in classes}
    if phase == 2 and min(len(v) for v in by_class.values()) < 2:
        raise ValueError("phase 2 needs at least two instances per category")
    anchors = rng.choice(len(labels), size=batch_size)
    positives = np.empty(batch_size, dtype=np.int64)
    negatives = np.empty(batch_size, dtype=np.int64)
    for row, a in enumerate(anchors):
        cls = labels[a]
        if phase == 1:
            positives[row] = rng.choice(by_class[cls])
            other = classes[classes != cls]
            negatives[row] = rng.choice(by_class[rng.choice(other)])
        else:
            positives[row] = a
            pool = by_class[cls]
            negatives[row] = rng.choice(pool[pool != a])
    batch = TripletBatch(anchors, positives, negatives, phase)
    batch.check(labels)
    return batch


@dataclasses.dataclass
class JointConfig:
    phase1_steps: int = 400
    phase2_steps: int = 200
    batch_size: int = 64
    margin_phase1: float = 0.2
    margin_phase2: float = 0.05
    aux_weight: float = 0.1
    base_lr: float = 1e-3
    warmup: int = 50
    seed: int = 0


def train_joint(
    heads: JointHeads,
    z_matrix: np.ndarray,
    raster_feats: np.ndarray,
    labels: np.ndarray,
    cfg: JointConfig,
    log_fp=None,
    phase_end=None,
) -> JointHeads:
    """Two-phase triplet training over frozen branch features.

    Only the heads update; the branch encoders never appear here, so
    freezing is structural. An auxiliary classifier on the joint
    embeddings (both modalities) regularizes with weight ``aux_weight``.
    ``phase_end(phase, heads)`` fires after each phase for evaluation.
    """
    labels = np.asarray(labels)
    if len(z_matrix) != len(raster_feats) or len(z_matrix) != len(labels):
        raise ValueError("parallel arrays must align")
    opt = Adam(heads, base_lr=cfg.base_lr, warmup=cfg.warmup)
    schedule = [(1, cfg.margin_phase1, cfg.phase1_steps), (2, cfg.margin_phase2, cfg.phase2_steps)]
    step_no = 0
    for phase, margin, steps in schedule:
        for _ in range(steps):
            step_no += 1
            rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(step_no,)))
            batch = sample_triplets(labels, phase, cfg.batch_size, rng)
            u_a = heads.embed_vector(z_matrix[batch.anchor_idx], training=True)
            u_p = heads.embed_raster(raster_feats[batch.positive_idx], training=True)
            u_n = heads.embed_raster(raster_feats[batch.negative_idx], training=True)
            tloss, du_a, du_p, du_n = triplet_grads(u_a, u_p, u_n, margin)
            logits_a = heads.aux.forward(u_a, training=True)
            logits_p = heads.aux.forward(u_p, training=True)
            aux_a, daux_a, _ = class_loss(logits_a, labels[batch.anchor_idx])
            aux_p, daux_p, _ = class_loss(logits_p, labels[batch.positive_idx])
            total = tloss + cfg.aux_weight * 0.5 * (aux_a + aux_p)
            if not np.isfinite(total):
                raise RuntimeError(f"non-finite joint loss at step {step_no} (phase {phase})")
            heads.zero_grads()
            w = cfg.aux_weight * 0.5
            du_p = du_p + heads.aux.backward(daux_p * w)
            du_a = du_a + heads.aux.backward(daux_a * w)
            heads.backward_raster(du_n)
            heads.backward_raster(du_p)
            heads.backward_vector(du_a)
            opt.apply(heads)
            if log_fp is not None and step_no % 100 == 0:
                print(
                    f'{{"step": {step_no}, "phase": {phase}, "triplet": {tloss:.4f}, "total": {total:.4f}}}',
                    file=log_fp,
                    flush=True,
                )
        if phase_end is not None:
            phase_end(phase, heads)
    return heads


def triplet_satisfaction(heads: JointHeads, z_matrix, raster_feats, labels, phase: int,
                         n_triplets: int, seed: int = 0) -> float:
    """Fraction of sampled triplets with d(anchor, positive) < d(anchor, negative)."""
    rng = np.random.default_rng(seed)
    batch = sample_triplets(np.asarray(labels), phase, n_triplets, rng)
    u_a = heads.embed_vector(z_matrix[batch.anchor_idx])
    u_p = heads.embed_raster(raster_feats[batch.positive_idx])
    u_n = heads.embed_raster(raster_feats[batch.negative_idx])
    d_p = np.linalg.norm(u_a - u_p, axis=1)
    d_n = np.linalg.norm(u_a - u_n, axis=1)
    return float((d_p < d_n).mean())


def own_instance_ranks(heads: JointHeads, z_matrix: np.ndarray, raster_feats: np.ndarray) -> np.ndarray:
    """1-based rank of each sketch's own raster when queried in the joint space."""
    u_r = heads.embed_raster(raster_feats)
    u_v = heads.embed_vector(z_matrix)
    index = EmbeddingIndex(u_r, [str(i) for i in range(len(u_r))], metric="euclidean")
    ranks = np.empty(len(u_v), dtype=np.int64)
    for i, q in enumerate(u_v):
        ranked = knn(index, q, len(u_r))
        ranks[i] = next(pos + 1 for pos, (rid, _) in enumerate(ranked) if rid == str(i))
    return ranks


def sbir_query(heads: JointHeads, z_query: np.ndarray, index: EmbeddingIndex, k: int):
    """Rank an index of raster-side joint embeddings by a vector-side query."""
    u = heads.embed_vector(np.atleast_2d(z_query))[0]
    return knn(index, u, k)
