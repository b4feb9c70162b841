"""Discrete token vocabulary shared by both tokenization schemes.

Ids 0-3 are reserved: PAD, SOS, EOS, SEP. Content tokens start at 4.
A serialized sketch is SOS, then per stroke its point tokens followed
by SEP, then EOS; PAD fills the tail up to a fixed length.
"""

from __future__ import annotations

import dataclasses

import numpy as np

PAD = 0
SOS = 1
EOS = 2
SEP = 3
FIRST_CONTENT = 4


class TokenError(ValueError):
    """Raised for malformed token sequences."""


@dataclasses.dataclass(frozen=True)
class TokenSequence:
    """Validated token ids with the vocabulary they were drawn from."""

    ids: np.ndarray
    vocab_size: int

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "ids", ids)
        validate_tokens(ids, self.vocab_size)

    def __len__(self) -> int:
        return len(self.ids)

    def content_ids(self) -> np.ndarray:
        """Content tokens in order, with structure tokens stripped."""
        return self.ids[self.ids >= FIRST_CONTENT]


def validate_tokens(ids: np.ndarray, vocab_size: int) -> None:
    ids = np.asarray(ids)
    if ids.ndim != 1 or len(ids) < 2:
        raise TokenError("token sequence must be 1-d with at least SOS and EOS")
    if ids.min() < 0 or ids.max() >= vocab_size:
        raise TokenError(f"token id out of range for vocab size {vocab_size}")
    if ids[0] != SOS:
        raise TokenError("sequence must start with SOS")
    eos_pos = np.flatnonzero(ids == EOS)
    if len(eos_pos) != 1:
        raise TokenError("sequence must contain exactly one EOS")
    if np.any(ids[eos_pos[0] + 1 :] != PAD):
        raise TokenError("only PAD may follow EOS")
    body = ids[1 : eos_pos[0]]
    if np.any(body == PAD) or np.any(body == SOS):
        raise TokenError("PAD and SOS may not appear inside the body")


def wrap_tokens(stroke_tokens: list[np.ndarray], vocab_size: int, max_len: int | None = None) -> TokenSequence:
    """Assemble per-stroke content tokens into SOS ... SEP ... EOS [PAD]."""
    parts = [np.array([SOS], dtype=np.int64)]
    for toks in stroke_tokens:
        parts.append(np.asarray(toks, dtype=np.int64))
        parts.append(np.array([SEP], dtype=np.int64))
    parts.append(np.array([EOS], dtype=np.int64))
    ids = np.concatenate(parts)
    if max_len is not None:
        if len(ids) > max_len:
            raise TokenError(f"sequence needs {len(ids)} tokens but max_len is {max_len}")
        ids = np.concatenate([ids, np.full(max_len - len(ids), PAD, dtype=np.int64)])
    return TokenSequence(ids, vocab_size)


def split_strokes(seq: TokenSequence) -> list[np.ndarray]:
    """Invert wrap_tokens: per-stroke content token arrays.

    A trailing run of content tokens with no closing SEP still counts as
    a stroke, so truncated model output stays decodable.
    """
    ids = seq.ids
    end = int(np.flatnonzero(ids == EOS)[0])
    strokes, current = [], []
    for tok in ids[1:end]:
        if tok == SEP:
            if current:
                strokes.append(np.asarray(current, dtype=np.int64))
            current = []
        else:
            current.append(int(tok))
    if current:
        strokes.append(np.asarray(current, dtype=np.int64))
    return strokes


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Uniform n x n grid over a fixed canvas for absolute-position tokens.

    The cell size is canvas/side, so the decoded cell center is never more
    than half a cell diagonal from the encoded point. Bounds are part of
    the spec rather than fitted per sketch, which keeps the scheme
    sensitive to translation.
    """

    side: int
    canvas: tuple[float, float] = (255.0, 255.0)

    def __post_init__(self):
        if self.side < 2:
            raise ValueError("grid side must be at least 2")

    @property
    def vocab_size(self) -> int:
        return self.side * self.side + FIRST_CONTENT

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Row-major cell index for each absolute (x, y) point."""
        points = np.asarray(points, dtype=np.float64)
        w, h = self.canvas
        col = np.clip(np.floor(points[:, 0] / w * self.side), 0, self.side - 1)
        row = np.clip(np.floor(points[:, 1] / h * self.side), 0, self.side - 1)
        return (row * self.side + col).astype(np.int64)

    def center_of(self, cells: np.ndarray) -> np.ndarray:
        """Absolute (x, y) center of each cell index."""
        cells = np.asarray(cells, dtype=np.int64)
        if len(cells) and (cells.min() < 0 or cells.max() >= self.side * self.side):
            raise TokenError("cell index out of range")
        row, col = np.divmod(cells, self.side)
        w, h = self.canvas
        x = (col + 0.5) * (w / self.side)
        y = (row + 0.5) * (h / self.side)
        return np.stack([x, y], axis=1)


def grid_encode(sketch, spec: GridSpec, max_len: int | None = None) -> TokenSequence:
    """Tokenize a sketch by the grid cell of each absolute point."""
    stroke_tokens = [spec.cell_of(stroke) + FIRST_CONTENT for stroke in sketch.strokes]
    return wrap_tokens(stroke_tokens, spec.vocab_size, max_len)


def grid_decode(seq: TokenSequence, spec: GridSpec, label=None):
    """Rebuild a sketch from grid tokens using cell centers."""
    from sketchembed.sketch import Sketch

    strokes = []
    for toks in split_strokes(seq):
        strokes.append(spec.center_of(toks - FIRST_CONTENT))
    if not strokes:
        raise TokenError("no content tokens to decode")
    return Sketch(strokes=strokes, label=label)
