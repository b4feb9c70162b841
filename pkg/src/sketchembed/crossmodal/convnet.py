"""A small convolutional encoder for rasterized sketches.

Stands in for a large pretrained image network: four stride-2 conv
blocks and global average pooling map a 64x64 grayscale raster to a
64-dim feature. It is trained once as a classifier, then frozen.
"""

from __future__ import annotations

import numpy as np

from sketchembed.model.core import Dense, Module
from sketchembed.raster import RasterImage

INPUT_SIDE = 64
FEATURE_DIM = 64
CHANNELS = (1, 8, 16, 32, 64)


class Conv2d(Module):
    """3x3/stride-2/pad-1 convolution via explicit patch gathering."""

    KERNEL = 3
    STRIDE = 2
    PAD = 1

    def __init__(self, rng, c_in: int, c_out: int, side_in: int, dtype):
        super().__init__()
        k = self.KERNEL
        fan_in = c_in * k * k
        limit = np.sqrt(6.0 / (fan_in + c_out))
        self.add_param("W", rng.uniform(-limit, limit, size=(fan_in, c_out)).astype(dtype))
        self.add_param("b", np.zeros(c_out, dtype=dtype))
        self.c_in, self.c_out = c_in, c_out
        self.side_in = side_in
        self.side_out = (side_in + 2 * self.PAD - k) // self.STRIDE + 1
        i0 = np.repeat(np.arange(k), k)
        j0 = np.tile(np.arange(k), k)
        i1 = self.STRIDE * np.repeat(np.arange(self.side_out), self.side_out)
        j1 = self.STRIDE * np.tile(np.arange(self.side_out), self.side_out)
        self._ii = i1[:, None] + i0[None, :]
        self._jj = j1[:, None] + j0[None, :]
        self._offsets = list(zip(i0.tolist(), j0.tolist()))

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        b = x.shape[0]
        k = self.KERNEL
        xp = np.pad(x, ((0, 0), (0, 0), (self.PAD, self.PAD), (self.PAD, self.PAD)))
        cols = xp[:, :, self._ii, self._jj]
        cols = cols.transpose(0, 2, 1, 3).reshape(b, self.side_out**2, self.c_in * k * k)
        out = cols @ self.P["W"] + self.P["b"]
        if training:
            self._stack.append(cols)
        return out.transpose(0, 2, 1).reshape(b, self.c_out, self.side_out, self.side_out)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        cols = self._stack.pop()
        b = dout.shape[0]
        k = self.KERNEL
        flat = dout.reshape(b, self.c_out, -1).transpose(0, 2, 1)
        self.G["W"] += cols.reshape(-1, cols.shape[-1]).T @ flat.reshape(-1, self.c_out)
        self.G["b"] += flat.reshape(-1, self.c_out).sum(axis=0)
        dcols = (flat @ self.P["W"].T).reshape(b, self.side_out**2, self.c_in, k * k)
        dcols = dcols.transpose(0, 2, 1, 3)
        side_p = self.side_in + 2 * self.PAD
        dxp = np.zeros((b, self.c_in, side_p, side_p), dtype=dout.dtype)
        span = self.STRIDE * self.side_out
        # each kernel offset lands on a regular strided grid, so scatter
        # by slice instead of per-index adds
        for idx, (di, dj) in enumerate(self._offsets):
            dxp[:, :, di : di + span : self.STRIDE, dj : dj + span : self.STRIDE] += (
                dcols[:, :, :, idx].reshape(b, self.c_in, self.side_out, self.side_out)
            )
        return dxp[:, :, self.PAD : self.PAD + self.side_in, self.PAD : self.PAD + self.side_in]


class RasterEncoder(Module):
    """Conv stack + global average pool; .frozen marks it off-limits."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(seed)
        side = INPUT_SIDE
        self.convs = []
        for i in range(len(CHANNELS) - 1):
            conv = Conv2d(rng, CHANNELS[i], CHANNELS[i + 1], side, dtype)
            self.convs.append(self.add_module(f"conv{i}", conv))
            side = conv.side_out
        self.frozen = False
        self.dtype = dtype

    def forward(self, images: np.ndarray, training: bool = False) -> np.ndarray:
        """images: (B, 64, 64) or (B, 1, 64, 64) -> features (B, 64)."""
        if images.ndim == 3:
            images = images[:, None, :, :]
        if images.shape[2:] != (INPUT_SIDE, INPUT_SIDE):
            raise ValueError(f"expected {INPUT_SIDE}x{INPUT_SIDE} input, got {images.shape[2:]}")
        x = images.astype(self.dtype)
        for conv in self.convs:
            x = conv.forward(x, training)
            active = x > 0
            if training:
                self._stack.append(active)
            x = x * active
        if training:
            self._stack.append(x.shape)
        return x.mean(axis=(2, 3))

    def backward(self, dfeat: np.ndarray) -> None:
        shape = self._stack.pop()
        dx = np.broadcast_to(
            dfeat[:, :, None, None] / (shape[2] * shape[3]), shape
        ).astype(dfeat.dtype)
        for conv in reversed(self.convs):
            dx = dx * self._stack.pop()
            dx = conv.backward(dx)

    def encode_image(self, image: RasterImage) -> np.ndarray:
        if (image.height, image.width) != (INPUT_SIDE, INPUT_SIDE):
            raise ValueError(f"raster must be {INPUT_SIDE}x{INPUT_SIDE}")
        return self.forward(image.pixels[None, :, :])[0]


def train_raster_encoder(
    images: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    steps: int = 600,
    batch_size: int = 32,
    lr: float = 1e-3,
    seed: int = 0,
    log_fp=None,
):
    """Pretrain the encoder as a classifier; returns (encoder, head, acc).

    The reported accuracy is on the training images, which is all the
    freeze contract needs; callers split their own held-out set.
    """
    from sketchembed.training import Adam, class_loss

    encoder = RasterEncoder(seed=seed)
    rng_head = np.random.default_rng(seed + 1)
    head = Dense(rng_head, FEATURE_DIM, n_classes, np.float32)

    class _Wrap(Module):
        def __init__(self):
            super().__init__()
            self.add_module("enc", encoder)
            self.add_module("head", head)

    wrap = _Wrap()
    opt = Adam(wrap, base_lr=lr, warmup=50)
    labels = np.asarray(labels)
    for step in range(1, steps + 1):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step,)))
        idx = rng.choice(len(images), size=min(batch_size, len(images)), replace=False)
        feats = encoder.forward(images[idx], training=True)
        logits = head.forward(feats, training=True)
        loss, dlogits, acc = class_loss(logits, labels[idx])
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite pretrain loss at step {step}")
        wrap.zero_grads()
        encoder.backward(head.backward(dlogits))
        opt.apply(wrap)
        if log_fp is not None and step % 100 == 0:
            print(f'{{"step": {step}, "loss": {loss:.4f}, "acc": {acc:.3f}}}', file=log_fp, flush=True)
    feats = encoder.forward(images)
    final_acc = float((head.forward(feats).argmax(axis=1) == labels).mean())
    encoder.frozen = True
    return encoder, head, final_acc
