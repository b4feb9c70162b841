"""Scaled dot-product attention, single- and multi-head."""

from __future__ import annotations

import numpy as np

from sketchembed.model.core import Dense, Module, masked_softmax, softmax_backward


def sha(q: np.ndarray, k: np.ndarray, v: np.ndarray, alpha: float, keep=None) -> np.ndarray:
    """softmax(alpha q k^T) v over the last two axes, honoring a keep mask.

    A query row with every key dropped yields a zero output row.
    """
    scores = alpha * (q @ np.swapaxes(k, -1, -2))
    return masked_softmax(scores, keep) @ v


class MultiHeadAttention(Module):
    """Per-head sha over learned projections, concatenated and reprojected.

    Projections carry no biases. Setting .record makes forward stash the
    attention weights on .last_attn for inspection; leave it off outside
    single-threaded diagnostics.
    """

    def __init__(self, rng, d_model: int, n_heads: int, dtype):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.alpha = 1.0 / np.sqrt(self.d_head)
        self.q_proj = self.add_module("q", Dense(rng, d_model, d_model, dtype, bias=False))
        self.k_proj = self.add_module("k", Dense(rng, d_model, d_model, dtype, bias=False))
        self.v_proj = self.add_module("v", Dense(rng, d_model, d_model, dtype, bias=False))
        self.o_proj = self.add_module("o", Dense(rng, d_model, d_model, dtype, bias=False))
        self.record = False
        self.last_attn: np.ndarray | None = None

    def _split(self, x: np.ndarray) -> np.ndarray:
        b, length, _ = x.shape
        return x.reshape(b, length, self.n_heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        b, _, length, _ = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, length, self.n_heads * self.d_head)

    def forward(self, q_in, k_in, v_in, keep=None, training: bool = False) -> np.ndarray:
        q = self._split(self.q_proj.forward(q_in, training))
        k = self._split(self.k_proj.forward(k_in, training))
        v = self._split(self.v_proj.forward(v_in, training))
        scores = self.alpha * np.matmul(q, k.transpose(0, 1, 3, 2))
        attn = masked_softmax(scores, keep)
        if self.record:
            self.last_attn = attn
        ctx = np.matmul(attn, v)
        if training:
            self._stack.append((q, k, v, attn))
        return self.o_proj.forward(self._merge(ctx), training)

    def backward(self, dout: np.ndarray):
        """Returns (dq_in, dk_in, dv_in)."""
        q, k, v, attn = self._stack.pop()
        dctx = self._split(self.o_proj.backward(dout))
        dattn = np.matmul(dctx, v.transpose(0, 1, 3, 2))
        dv = np.matmul(attn.transpose(0, 1, 3, 2), dctx)
        dscores = softmax_backward(attn, dattn) * self.alpha
        dq = np.matmul(dscores, k)
        dk = np.matmul(dscores.transpose(0, 1, 3, 2), q)
        dq_in = self.q_proj.backward(self._merge(dq))
        dk_in = self.k_proj.backward(self._merge(dk))
        dv_in = self.v_proj.backward(self._merge(dv))
        return dq_in, dk_in, dv_in
