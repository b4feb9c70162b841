"""The full autoencoder: embed, encode, pool to z, expand, decode.

Layer normalization sits after each residual add (post-norm). The
encoder applies a padding mask; the decoder self-attention keeps only
the causal mask, and cross-attention over the expanded memory is
unmasked.
"""

from __future__ import annotations

import numpy as np

from sketchembed import tokens
from sketchembed.model.attention import MultiHeadAttention
from sketchembed.model.config import ModelConfig
from sketchembed.model.core import (
    Dense,
    Dropout,
    Embedding,
    LayerNorm,
    Module,
    glorot,
    masked_softmax,
    positional_encoding,
    softmax_backward,
)


class FeedForward(Module):
    """Position-wise max(0, x W1 + b1) W2 + b2."""

    def __init__(self, rng, d_model: int, d_ff: int, dtype):
        super().__init__()
        self.fc1 = self.add_module("fc1", Dense(rng, d_model, d_ff, dtype))
        self.fc2 = self.add_module("fc2", Dense(rng, d_ff, d_model, dtype))

    def forward(self, x, training: bool = False):
        hidden = self.fc1.forward(x, training)
        active = hidden > 0
        if training:
            self._stack.append(active)
        return self.fc2.forward(hidden * active, training)

    def backward(self, dout):
        active = self._stack.pop()
        dhidden = self.fc2.backward(dout) * active
        return self.fc1.backward(dhidden)


class EncoderLayer(Module):
    def __init__(self, rng, cfg: ModelConfig):
        super().__init__()
        dtype = cfg.np_dtype
        self.attn = self.add_module("attn", MultiHeadAttention(rng, cfg.d_model, cfg.n_heads, dtype))
        self.ln1 = self.add_module("ln1", LayerNorm(cfg.d_model, dtype))
        self.ffn = self.add_module("ffn", FeedForward(rng, cfg.d_model, cfg.d_ff, dtype))
        self.ln2 = self.add_module("ln2", LayerNorm(cfg.d_model, dtype))
        self.drop1 = self.add_module("drop1", Dropout(cfg.dropout))
        self.drop2 = self.add_module("drop2", Dropout(cfg.dropout))

    def forward(self, x, keep, training=False, rng=None):
        attn_out = self.drop1.forward(self.attn.forward(x, x, x, keep, training), training, rng)
        mid = self.ln1.forward(x + attn_out, training)
        ffn_out = self.drop2.forward(self.ffn.forward(mid, training), training, rng)
        return self.ln2.forward(mid + ffn_out, training)

    def backward(self, dout):
        dmid = self.ln2.backward(dout)
        dmid = dmid + self.ffn.backward(self.drop2.backward(dmid))
        dx = self.ln1.backward(dmid)
        dq, dk, dv = self.attn.backward(self.drop1.backward(dx))
        return dx + dq + dk + dv


class DecoderLayer(Module):
    def __init__(self, rng, cfg: ModelConfig):
        super().__init__()
        dtype = cfg.np_dtype
        self.self_attn = self.add_module("self", MultiHeadAttention(rng, cfg.d_model, cfg.n_heads, dtype))
        self.ln1 = self.add_module("ln1", LayerNorm(cfg.d_model, dtype))
        self.cross_attn = self.add_module("cross", MultiHeadAttention(rng, cfg.d_model, cfg.n_heads, dtype))
        self.ln2 = self.add_module("ln2", LayerNorm(cfg.d_model, dtype))
        self.ffn = self.add_module("ffn", FeedForward(rng, cfg.d_model, cfg.d_ff, dtype))
        self.ln3 = self.add_module("ln3", LayerNorm(cfg.d_model, dtype))
        self.drop1 = self.add_module("drop1", Dropout(cfg.dropout))
        self.drop2 = self.add_module("drop2", Dropout(cfg.dropout))
        self.drop3 = self.add_module("drop3", Dropout(cfg.dropout))

    def forward(self, x, memory, causal_keep, training=False, rng=None):
        self_out = self.drop1.forward(
            self.self_attn.forward(x, x, x, causal_keep, training), training, rng
        )
        a = self.ln1.forward(x + self_out, training)
        cross_out = self.drop2.forward(
            self.cross_attn.forward(a, memory, memory, None, training), training, rng
        )
        b = self.ln2.forward(a + cross_out, training)
        ffn_out = self.drop3.forward(self.ffn.forward(b, training), training, rng)
        return self.ln3.forward(b + ffn_out, training)

    def backward(self, dout):
        """Returns (dx, dmemory)."""
        db = self.ln3.backward(dout)
        db = db + self.ffn.backward(self.drop3.backward(db))
        da = self.ln2.backward(db)
        dq, dk, dv = self.cross_attn.backward(self.drop2.backward(da))
        da = da + dq
        dx = self.ln1.backward(da)
        sq, sk, sv = self.self_attn.backward(self.drop1.backward(dx))
        return dx + sq + sk + sv, dk + dv


class AttentionPool(Module):
    """Collapse encoder states to one vector by learned soft weights.

    s = softmax(tanh(h K^T + b) v) over kept time steps, z = sum_i s_i h_i.
    """

    def __init__(self, rng, d_model: int, dtype):
        super().__init__()
        self.add_param("K", glorot(rng, d_model, d_model, dtype))
        self.add_param("b", np.zeros(d_model, dtype=dtype))
        self.add_param("v", rng.normal(0.0, 1.0 / np.sqrt(d_model), size=d_model).astype(dtype))
        self.record = False
        self.last_weights: np.ndarray | None = None

    def forward(self, h, keep, training: bool = False):
        """h: (B, L, d); keep: (B, L) bool. Returns z: (B, d)."""
        if keep is not None and not keep.any(axis=1).all():
            raise ValueError("cannot pool a fully masked sequence")
        pre = h @ self.P["K"].T + self.P["b"]
        t = np.tanh(pre)
        scores = t @ self.P["v"]
        s = masked_softmax(scores, keep)
        if self.record:
            self.last_weights = s
        z = np.einsum("bl,bld->bd", s, h)
        if training:
            self._stack.append((h, t, s))
        return z

    def backward(self, dz):
        h, t, s = self._stack.pop()
        ds = np.einsum("bd,bld->bl", dz, h)
        dh = s[:, :, None] * dz[:, None, :]
        dscores = softmax_backward(s, ds)
        self.G["v"] += np.einsum("bl,bla->a", dscores, t)
        dpre = dscores[:, :, None] * self.P["v"] * (1.0 - t * t)
        self.G["K"] += np.einsum("bla,bld->ad", dpre, h)
        self.G["b"] += dpre.sum(axis=(0, 1))
        return dh + dpre @ self.P["K"]


class Expand(Module):
    """Map z back to an L_max x d_model decoder memory, plus positions.

    Mode "affine" learns the map; "tile" repeats z and is parameter-free.
    """

    def __init__(self, rng, cfg: ModelConfig):
        super().__init__()
        self.mode = cfg.expand_mode
        self.max_len = cfg.max_len
        self.d_model = cfg.d_model
        self.pe = positional_encoding(cfg.max_len, cfg.d_model, cfg.np_dtype)
        if self.mode == "affine":
            self.proj = self.add_module("proj", Dense(rng, cfg.d_model, cfg.max_len * cfg.d_model, cfg.np_dtype))

    def forward(self, z, training: bool = False):
        b = z.shape[0]
        if self.mode == "affine":
            flat = self.proj.forward(z, training)
            mem = flat.reshape(b, self.max_len, self.d_model)
        else:
            mem = np.broadcast_to(z[:, None, :], (b, self.max_len, self.d_model)).copy()
        return mem + self.pe

    def backward(self, dmem):
        b = dmem.shape[0]
        if self.mode == "affine":
            return self.proj.backward(dmem.reshape(b, -1))
        return dmem.sum(axis=1)


def causal_keep(length: int) -> np.ndarray:
    """Lower-triangular keep mask shaped to broadcast over (B, H, L, L)."""
    return np.tril(np.ones((length, length), dtype=bool))[None, None]


def continuous_keep(rows: np.ndarray) -> np.ndarray:
    """Keep rows up to and including the first terminator (p3) row."""
    p3 = rows[..., 4] > 0.5
    any_p3 = p3.any(axis=-1)
    first = np.where(any_p3, p3.argmax(axis=-1), rows.shape[-2] - 1)
    return np.arange(rows.shape[-2])[None, :] <= first[:, None]


class SketchTransformer(Module):
    """Encoder, bottleneck, expansion, decoder, and output heads."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dtype = cfg.np_dtype
        if cfg.mode == "tokenized":
            self.embed = self.add_module("embed", Embedding(rng, cfg.vocab_size, cfg.d_model, dtype))
        else:
            self.embed = self.add_module("embed", Dense(rng, 5, cfg.d_model, dtype))
        self.pe = positional_encoding(cfg.max_len, cfg.d_model, dtype)
        self.enc_layers = [
            self.add_module(f"enc{i}", EncoderLayer(rng, cfg)) for i in range(cfg.n_layers)
        ]
        self.pool = self.add_module("pool", AttentionPool(rng, cfg.d_model, dtype))
        self.expand = self.add_module("expand", Expand(rng, cfg))
        self.dec_layers = [
            self.add_module(f"dec{i}", DecoderLayer(rng, cfg)) for i in range(cfg.n_layers)
        ]
        out_dim = cfg.vocab_size if cfg.mode == "tokenized" else 5
        self.head = self.add_module("head", Dense(rng, cfg.d_model, out_dim, dtype))
        self.classifier = None
        if cfg.n_classes > 0:
            self.classifier = self.add_module("cls", Dense(rng, cfg.d_model, cfg.n_classes, dtype))
        self.drop_enc = self.add_module("drop_enc", Dropout(cfg.dropout))
        self.drop_dec = self.add_module("drop_dec", Dropout(cfg.dropout))

    # ---- masks and embedding -------------------------------------------

    def input_keep(self, enc_in: np.ndarray) -> np.ndarray:
        """Non-padding positions of an encoder input batch, (B, L) bool."""
        if self.cfg.mode == "tokenized":
            return enc_in != tokens.PAD
        return continuous_keep(enc_in)

    def _embed_positions(self, x, training, rng, dropper):
        length = x.shape[1]
        if length > self.cfg.max_len:
            raise ValueError(f"sequence length {length} exceeds max_len {self.cfg.max_len}")
        emb = self.embed.forward(x, training) + self.pe[:length]
        return dropper.forward(emb, training, rng)

    # ---- forward passes -------------------------------------------------

    def encode(self, enc_in: np.ndarray, training: bool = False, rng=None):
        """Returns (z, h, keep) for a batch of encoder inputs."""
        keep = self.input_keep(enc_in)
        h = self._embed_positions(enc_in, training, rng, self.drop_enc)
        attn_keep = keep[:, None, None, :]
        for layer in self.enc_layers:
            h = layer.forward(h, attn_keep, training, rng)
        z = self.pool.forward(h, keep, training)
        return z, h, keep

    def decode(self, memory: np.ndarray, dec_in: np.ndarray, training: bool = False, rng=None):
        """Teacher-forced decoder pass over a fixed memory."""
        x = self._embed_positions(dec_in, training, rng, self.drop_dec)
        keep = causal_keep(x.shape[1])
        for layer in self.dec_layers:
            x = layer.forward(x, memory, keep, training, rng)
        return self.head.forward(x, training)

    def forward(self, enc_in: np.ndarray, dec_in: np.ndarray, training: bool = False, rng=None):
        """Full pass. Returns dict with z, dec_out, and class_logits."""
        z, _, _ = self.encode(enc_in, training, rng)
        memory = self.expand.forward(z, training)
        dec_out = self.decode(memory, dec_in, training, rng)
        class_logits = None
        if self.classifier is not None:
            class_logits = self.classifier.forward(z, training)
        return {"z": z, "dec_out": dec_out, "class_logits": class_logits}

    def backward(self, d_dec_out, d_class_logits=None, dz_extra=None):
        """Mirror of forward; gradients accumulate into .G slots."""
        dx = self.head.backward(d_dec_out)
        dmem = None
        for layer in reversed(self.dec_layers):
            dx, dm = layer.backward(dx)
            dmem = dm if dmem is None else dmem + dm
        demb = self.drop_dec.backward(dx)
        self.embed.backward(demb)
        dz = self.expand.backward(dmem)
        if d_class_logits is not None:
            dz = dz + self.classifier.backward(d_class_logits)
        if dz_extra is not None:
            dz = dz + dz_extra
        dh = self.pool.backward(dz)
        for layer in reversed(self.enc_layers):
            dh = layer.backward(dh)
        demb = self.drop_enc.backward(dh)
        self.embed.backward(demb)

    # ---- generation ------------------------------------------------------

    def autoregress(self, z: np.ndarray, max_steps: int | None = None):
        """Greedy decode from z. Tokenized mode returns a list of id arrays
        (SOS included, EOS included when emitted within budget); continuous
        mode returns a list of stroke-5 row arrays."""
        if max_steps is None:
            max_steps = self.cfg.max_len - 1
        max_steps = min(max_steps, self.cfg.max_len - 1)
        z = np.atleast_2d(z).astype(self.cfg.np_dtype)
        memory = self.expand.forward(z)
        if self.cfg.mode == "tokenized":
            return self._autoregress_tokens(memory, max_steps)
        return self._autoregress_rows(memory, max_steps)

    def _autoregress_tokens(self, memory, max_steps):
        b = memory.shape[0]
        seqs = np.full((b, 1), tokens.SOS, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        for _ in range(max_steps):
            logits = self.decode(memory, seqs)
            nxt = logits[:, -1, :].argmax(axis=1)
            nxt = np.where(done, tokens.PAD, nxt)
            seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
            done |= nxt == tokens.EOS
            if done.all():
                break
        out = []
        for row, is_done in zip(seqs, done):
            if is_done:
                row = row[: int(np.flatnonzero(row == tokens.EOS)[0]) + 1]
            out.append(row.copy())
        return out

    def _autoregress_rows(self, memory, max_steps):
        b = memory.shape[0]
        sos_row = np.zeros((b, 1, 5), dtype=self.cfg.np_dtype)
        sos_row[:, 0, 2] = 1.0
        rows = sos_row
        done = np.zeros(b, dtype=bool)
        for _ in range(max_steps):
            out = self.decode(memory, rows)
            offsets = out[:, -1, :2]
            pen = out[:, -1, 2:].argmax(axis=1)
            nxt = np.zeros((b, 1, 5), dtype=self.cfg.np_dtype)
            nxt[:, 0, :2] = offsets
            nxt[np.arange(b), 0, 2 + pen] = 1.0
            nxt[done, 0, :] = np.array([0, 0, 0, 0, 1], dtype=self.cfg.np_dtype)
            rows = np.concatenate([rows, nxt], axis=1)
            done |= pen == 2
            if done.all():
                break
        out_rows = []
        for seq, is_done in zip(rows, done):
            body = seq[1:]
            if is_done:
                p3 = np.flatnonzero(body[:, 4] > 0.5)
                body = body[: p3[0] + 1]
            out_rows.append(body.copy())
        return out_rows

    def set_record_attention(self, flag: bool):
        """Make every attention block (and the pool) keep its last weights.

        Recording writes per-call state, so leave it off outside
        single-threaded diagnostics.
        """

        def walk(mod: Module):
            if isinstance(mod, (MultiHeadAttention, AttentionPool)):
                mod.record = flag
            for child in mod._children.values():
                walk(child)

        walk(self)
