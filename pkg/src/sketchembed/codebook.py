"""Learned-dictionary tokenization of pen motions.

A codebook is a K-means clustering of (dx, dy) offsets in scale-normalized
units. Encoding replaces each motion with its nearest codeword id, which
makes the tokens translation-invariant but lets quantization error
accumulate along the sequence.

Codebook file layout (magic ``SKCB1``, little-endian):

    bytes 0-4   magic b"SKCB1"
    u32         K
    f32         lift_fraction
    u64         seed
    f32         offset_scale
    K x 2 f32   centroids (normalized units)
"""

from __future__ import annotations

import dataclasses
import struct
from pathlib import Path

import numpy as np

from sketchembed.tokens import FIRST_CONTENT, TokenSequence, split_strokes, wrap_tokens


class CodebookError(ValueError):
    """Raised for bad fits or malformed codebook files."""


MAGIC = b"SKCB1"


def _as_f32_exact(values) -> np.ndarray:
    """Round to float32 but keep float64 storage, so file round trips are
    bit-exact without giving up float64 arithmetic downstream."""
    return np.asarray(values, dtype=np.float32).astype(np.float64)


@dataclasses.dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray
    lift_fraction: float
    seed: int
    offset_scale: float = 1.0
    objective_trace: tuple[float, ...] = ()

    def __post_init__(self):
        cents = _as_f32_exact(self.centroids)
        if cents.ndim != 2 or cents.shape[1] != 2 or cents.shape[0] < 2:
            raise CodebookError("centroids must be a K x 2 matrix with K >= 2")
        if not np.all(np.isfinite(cents)):
            raise CodebookError("centroids must be finite")
        if len(np.unique(cents, axis=0)) != len(cents):
            raise CodebookError("duplicate centroids")
        cents.setflags(write=False)
        object.__setattr__(self, "centroids", cents)
        object.__setattr__(self, "offset_scale", float(np.float32(self.offset_scale)))
        if self.offset_scale <= 0:
            raise CodebookError("offset_scale must be positive")

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def vocab_size(self) -> int:
        return self.k + FIRST_CONTENT


def nearest_centroid(offsets: np.ndarray, centroids: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Index of the closest centroid per offset; ties go to the lower index.

    Distances are the plain squared differences, summed last-axis, so the
    result is bit-identical to a scalar brute-force scan.
    """
    offsets = np.atleast_2d(np.asarray(offsets, dtype=np.float64))
    centroids = np.asarray(centroids, dtype=np.float64)
    out = np.empty(len(offsets), dtype=np.int64)
    for lo in range(0, len(offsets), chunk):
        block = offsets[lo : lo + chunk]
        d2 = ((block[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        out[lo : lo + chunk] = np.argmin(d2, axis=1)
    return out


def _assign_fast(points: np.ndarray, centroids: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Nearest-centroid via the expanded quadratic, for the fit loop only.

    Cheaper than nearest_centroid but not bit-matched to a naive scan, so
    the encode path never uses it.
    """
    out = np.empty(len(points), dtype=np.int64)
    c_norm = (centroids**2).sum(axis=1)
    for lo in range(0, len(points), chunk):
        block = points[lo : lo + chunk]
        d2 = c_norm[None, :] - 2.0 * (block @ centroids.T)
        out[lo : lo + chunk] = np.argmin(d2, axis=1)
    return out


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, 2), dtype=np.float64)
    centers[0] = points[rng.integers(len(points))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = points[rng.integers(len(points))]
        else:
            centers[i] = points[rng.choice(len(points), p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    rel_tol: float = 1e-6,
) -> tuple[np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns centroids and the per-iteration objective (mean squared
    distance), which is non-increasing.
    """
    points = np.asarray(points, dtype=np.float64)
    distinct = np.unique(points, axis=0)
    if len(distinct) < k:
        raise CodebookError(
            f"only {len(distinct)} distinct points for K={k}; use a smaller K"
        )
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    trace: list[float] = []
    for _ in range(max_iter):
        assign = _assign_fast(points, centers)
        d2 = ((points - centers[assign]) ** 2).sum(axis=1)
        trace.append(float(d2.mean()))
        new_centers = centers.copy()
        counts = np.bincount(assign, minlength=k)
        sums_x = np.bincount(assign, weights=points[:, 0], minlength=k)
        sums_y = np.bincount(assign, weights=points[:, 1], minlength=k)
        occupied = counts > 0
        new_centers[occupied, 0] = sums_x[occupied] / counts[occupied]
        new_centers[occupied, 1] = sums_y[occupied] / counts[occupied]
        # empty clusters steal the currently worst-served points
        dead = np.flatnonzero(~occupied)
        if len(dead):
            worst = np.argsort(-d2, kind="stable")[: len(dead)]
            new_centers[dead] = points[worst]
        centers = new_centers
        if len(trace) >= 2 and trace[-2] - trace[-1] < rel_tol * max(trace[-2], 1e-30):
            break
    return centers, trace


def _offset_pools(corpus: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Split corpus offsets into pen-lift transitions and within-stroke ones.

    The lift pool holds the (dx, dy) recorded on points that follow a
    lift; the leading zero row of each sequence is no transition at all
    and joins neither pool.
    """
    lifts, within = [], []
    for seq in corpus:
        seq = np.asarray(seq, dtype=np.float64)
        if len(seq) < 2:
            continue
        after_lift = seq[:-1, 2] > 0.5
        lifts.append(seq[1:][after_lift, :2])
        within.append(seq[1:][~after_lift, :2])
    lift_pool = np.concatenate(lifts) if lifts else np.empty((0, 2))
    within_pool = np.concatenate(within) if within else np.empty((0, 2))
    return lift_pool, within_pool


def _sample_pool(pool: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if n <= 0 or len(pool) == 0:
        return np.empty((0, 2))
    replace = len(pool) < n
    idx = rng.choice(len(pool), size=n, replace=replace)
    return pool[idx]


def fit_codebook(
    corpus: list[np.ndarray],
    k: int = 1000,
    sample_size: int = 100_000,
    lift_fraction: float = 0.20,
    seed: int = 0,
    offset_scale: float = 1.0,
) -> Codebook:
    """Cluster a motion sample where a fixed fraction comes from pen lifts."""
    if not corpus:
        raise CodebookError("empty corpus")
    if k > sample_size:
        raise CodebookError("K must not exceed sample_size")
    lift_pool, within_pool = _offset_pools(corpus)
    rng = np.random.default_rng(seed)
    n_lift = int(np.ceil(lift_fraction * sample_size))
    sample = np.concatenate(
        [
            _sample_pool(lift_pool, n_lift, rng),
            _sample_pool(within_pool, sample_size - n_lift, rng),
        ]
    )
    if len(sample) == 0:
        raise CodebookError("corpus has no transitions to sample")
    sample = sample / offset_scale
    centroids, trace = kmeans(sample, k, seed=seed)
    return Codebook(
        centroids=centroids,
        lift_fraction=lift_fraction,
        seed=seed,
        offset_scale=offset_scale,
        objective_trace=tuple(trace),
    )


def dict_encode(seq: np.ndarray, cb: Codebook, max_len: int | None = None) -> TokenSequence:
    """Tokenize a stroke-3 sequence by nearest codeword per motion."""
    seq = np.asarray(seq, dtype=np.float64)
    ids = nearest_centroid(seq[:, :2] / cb.offset_scale, cb.centroids) + FIRST_CONTENT
    stroke_tokens, start = [], 0
    ends = np.flatnonzero(seq[:, 2] > 0.5)
    for end in ends:
        stroke_tokens.append(ids[start : end + 1])
        start = end + 1
    if start < len(ids):
        stroke_tokens.append(ids[start:])
    return wrap_tokens(stroke_tokens, cb.vocab_size, max_len)


def dict_decode(seq: TokenSequence, cb: Codebook) -> np.ndarray:
    """Rebuild a stroke-3 sequence from codeword tokens."""
    if seq.vocab_size != cb.vocab_size:
        raise CodebookError(
            f"token vocab {seq.vocab_size} does not match codebook {cb.vocab_size}"
        )
    rows = []
    for toks in split_strokes(seq):
        offsets = cb.centroids[toks - FIRST_CONTENT] * cb.offset_scale
        pen = np.zeros(len(toks))
        pen[-1] = 1.0
        rows.append(np.column_stack([offsets, pen]))
    if not rows:
        raise CodebookError("no content tokens to decode")
    return np.concatenate(rows)


def save_codebook(path: str | Path, cb: Codebook) -> None:
    with open(path, "wb") as fp:
        fp.write(MAGIC)
        fp.write(struct.pack("<IfQf", cb.k, cb.lift_fraction, cb.seed, cb.offset_scale))
        fp.write(np.ascontiguousarray(cb.centroids, dtype="<f4").tobytes())


def load_codebook(path: str | Path) -> Codebook:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CodebookError(f"cannot read codebook {path}: {exc}") from exc
    if blob[:5] != MAGIC:
        raise CodebookError(f"{path} is not a SKCB1 codebook")
    k, lift_fraction, seed, offset_scale = struct.unpack_from("<IfQf", blob, 5)
    want = 5 + struct.calcsize("<IfQf") + k * 2 * 4
    if len(blob) != want:
        raise CodebookError(f"{path} is {len(blob)} bytes, expected {want}")
    cents = np.frombuffer(blob, dtype="<f4", count=k * 2, offset=5 + struct.calcsize("<IfQf"))
    return Codebook(
        centroids=cents.reshape(k, 2),
        lift_fraction=float(lift_fraction),
        seed=int(seed),
        offset_scale=float(offset_scale),
    )
