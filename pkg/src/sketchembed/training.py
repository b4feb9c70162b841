"""Losses, optimizer, and the deterministic training loop.

Reproducibility contract: (seed, data, config) determine the parameter
trajectory exactly. Each step draws its randomness from a SeedSequence
spawned off (seed, step), so a resumed run continues the uninterrupted
stream without serializing generator state.
"""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from sketchembed import tokens
from sketchembed.codebook import Codebook, dict_encode
from sketchembed.model.network import SketchTransformer, continuous_keep
from sketchembed.sketch import normalize_offsets, shuffle_strokes, to_stroke5
from sketchembed.tokens import GridSpec, grid_encode


class TrainingError(RuntimeError):
    pass


@dataclasses.dataclass
class TrainConfig:
    batch_size: int = 32
    steps: int = 1000
    lambda_cls: float = 1.0
    base_lr: float = 1e-3
    warmup: int = 200
    seed: int = 0
    shuffle_strokes: bool = False
    log_every: int = 50

    def __post_init__(self):
        if min(self.batch_size, self.warmup, self.log_every) <= 0 or self.steps < 0:
            raise ValueError("hyperparameters must be positive")
        if self.base_lr < 0 or self.lambda_cls < 0:
            raise ValueError("rates must be non-negative")

    def to_meta(self) -> dict[str, str]:
        return {k: str(v) for k, v in dataclasses.asdict(self).items()}


@dataclasses.dataclass
class LossReport:
    recon_loss: float
    class_loss: float
    total: float
    token_accuracy: float | None = None
    offset_mse: float | None = None
    pen_accuracy: float | None = None

    def as_record(self, step: int, wall: float) -> str:
        rec = {"step": step, "wall": round(wall, 4)}
        rec.update({k: v for k, v in dataclasses.asdict(self).items() if v is not None})
        return json.dumps(rec, sort_keys=True)


# ---- losses ---------------------------------------------------------------


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def recon_loss_tokens(logits: np.ndarray, targets: np.ndarray, include: np.ndarray):
    """Mean cross-entropy over included positions.

    Returns (loss, dlogits, token_accuracy). Excluded positions get an
    exactly zero gradient.
    """
    n = int(include.sum())
    if n == 0:
        raise TrainingError("no unpadded target positions in batch")
    logp = log_softmax(logits)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = float(-(picked * include).sum() / n)
    probs = np.exp(logp)
    dlogits = probs.copy()
    np.put_along_axis(
        dlogits, targets[..., None], np.take_along_axis(dlogits, targets[..., None], -1) - 1.0, -1
    )
    dlogits *= include[..., None] / n
    hits = (logits.argmax(axis=-1) == targets) & include
    return loss, dlogits.astype(logits.dtype), float(hits.sum() / n)


def recon_loss_continuous(out5: np.ndarray, target5: np.ndarray, include: np.ndarray):
    """Squared offset error plus 3-way pen cross-entropy, weighted 1:1.

    The offset term is the mean (over included positions) of the squared
    Euclidean offset error. Returns (loss, dout5, offset_mse, pen_acc).
    """
    n = int(include.sum())
    if n == 0:
        raise TrainingError("no unpadded target positions in batch")
    diff = (out5[..., :2] - target5[..., :2]) * include[..., None]
    mse = float((diff**2).sum() / n)
    pen_logits = out5[..., 2:]
    pen_target = target5[..., 2:].argmax(axis=-1)
    logp = log_softmax(pen_logits)
    picked = np.take_along_axis(logp, pen_target[..., None], axis=-1)[..., 0]
    pen_ce = float(-(picked * include).sum() / n)
    dout5 = np.empty_like(out5)
    dout5[..., :2] = 2.0 * diff / n
    dpen = np.exp(logp)
    np.put_along_axis(
        dpen, pen_target[..., None], np.take_along_axis(dpen, pen_target[..., None], -1) - 1.0, -1
    )
    dout5[..., 2:] = dpen * include[..., None] / n
    hits = (pen_logits.argmax(axis=-1) == pen_target) & include
    return mse + pen_ce, dout5, mse, float(hits.sum() / n)


def class_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of the classifier head. Returns (loss, dlogits, acc)."""
    if labels.min() < 0 or labels.max() >= logits.shape[-1]:
        raise TrainingError("class label out of range")
    logp = log_softmax(logits)
    picked = logp[np.arange(len(labels)), labels]
    loss = float(-picked.mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(len(labels)), labels] -= 1.0
    dlogits /= len(labels)
    acc = float((logits.argmax(axis=-1) == labels).mean())
    return loss, dlogits.astype(logits.dtype), acc


# ---- optimizer ------------------------------------------------------------


@dataclasses.dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


class Adam:
    """Adaptive moments with warmup-then-inverse-sqrt learning rate."""

    def __init__(self, model: SketchTransformer, base_lr: float, warmup: int,
                 beta1: float = 0.9, beta2: float = 0.98, eps: float = 1e-9):
        self.base_lr = base_lr
        self.warmup = warmup
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = OptimizerState(
            m={name: np.zeros_like(p) for name, p in model.param_items()},
            v={name: np.zeros_like(p) for name, p in model.param_items()},
        )

    def learning_rate(self, step: int) -> float:
        return self.base_lr * min(step / self.warmup, np.sqrt(self.warmup / step))

    def apply(self, model: SketchTransformer):
        self.state.step += 1
        t = self.state.step
        lr = self.learning_rate(t)
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        grads = dict(model.grad_items())
        for name, p in model.param_items():
            g = grads[name]
            m = self.state.m[name]
            v = self.state.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)).astype(p.dtype)

    def adopt(self, arrays: dict):
        """Install state loaded from a checkpoint."""
        self.state = OptimizerState(m=arrays["m"], v=arrays["v"], step=arrays["step"])


# ---- batching -------------------------------------------------------------


@dataclasses.dataclass
class Batch:
    enc_in: np.ndarray
    dec_in: np.ndarray
    target: np.ndarray
    include: np.ndarray
    labels: np.ndarray | None
    item_ids: list[int]


def encode_items(items, codec, max_len: int) -> list[np.ndarray]:
    """Tokenize stroke-3 items with either codec, unpadded id arrays.

    Stroke-3 carries no absolute origin, so the grid path recenters each
    rebuilt sketch on the canvas midpoint before quantizing.
    """
    out = []
    for item in items:
        if isinstance(codec, Codebook):
            out.append(dict_encode(item, codec).ids)
        elif isinstance(codec, GridSpec):
            from sketchembed.dataset import sketch_of_item

            out.append(grid_encode(sketch_of_item(item, codec.canvas), codec).ids)
        else:
            raise TypeError(f"unsupported codec {type(codec).__name__}")
        if len(out[-1]) > max_len:
            raise TrainingError(
                f"item needs {len(out[-1])} tokens but max_len is {max_len}; "
                "simplify harder or raise max_len"
            )
    return out


def token_batch(items, labels, codec, max_len: int, item_ids=None) -> Batch:
    seqs = encode_items(items, codec, max_len)
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), tokens.PAD, dtype=np.int64)
    for i, seq in enumerate(seqs):
        ids[i, : len(seq)] = seq
    return Batch(
        enc_in=ids,
        dec_in=ids[:, :-1],
        target=ids[:, 1:],
        include=ids[:, 1:] != tokens.PAD,
        labels=None if labels is None else np.asarray(labels),
        item_ids=list(item_ids) if item_ids is not None else list(range(len(seqs))),
    )


def continuous_batch(items, labels, offset_scale: float, max_len: int, item_ids=None, dtype=np.float32) -> Batch:
    width = max(len(it) for it in items) + 1
    if width > max_len:
        raise TrainingError(f"batch needs {width} rows but max_len is {max_len}")
    rows = np.stack(
        [to_stroke5(normalize_offsets(it, offset_scale), width) for it in items]
    ).astype(dtype)
    sos = np.zeros((len(items), 1, 5), dtype=dtype)
    sos[:, 0, 2] = 1.0
    return Batch(
        enc_in=rows,
        dec_in=np.concatenate([sos, rows[:, :-1]], axis=1),
        target=rows,
        include=continuous_keep(rows),
        labels=None if labels is None else np.asarray(labels),
        item_ids=list(item_ids) if item_ids is not None else list(range(len(items))),
    )


# ---- the loop -------------------------------------------------------------


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step,)))


def train_step(model: SketchTransformer, opt: Adam, batch: Batch, cfg: TrainConfig, rng) -> LossReport:
    """One forward/backward/update on a prepared batch."""
    out = model.forward(batch.enc_in, batch.dec_in, training=True, rng=rng)
    if model.cfg.mode == "tokenized":
        recon, d_dec, acc = recon_loss_tokens(out["dec_out"], batch.target, batch.include)
        report = LossReport(recon, 0.0, recon, token_accuracy=acc)
    else:
        recon, d_dec, mse, pen_acc = recon_loss_continuous(out["dec_out"], batch.target, batch.include)
        report = LossReport(recon, 0.0, recon, offset_mse=mse, pen_accuracy=pen_acc)
    d_cls = None
    if model.classifier is not None and batch.labels is not None:
        closs, d_cls, _ = class_loss(out["class_logits"], batch.labels)
        d_cls = d_cls * cfg.lambda_cls
        report.class_loss = closs
        report.total = report.recon_loss + cfg.lambda_cls * closs
    if not np.isfinite(report.total):
        raise TrainingError(
            f"non-finite loss at optimizer step {opt.state.step + 1}: "
            f"total={report.total} items={batch.item_ids}"
        )
    model.zero_grads()
    model.backward(d_dec, d_cls)
    opt.apply(model)
    return report


def make_batch(model, items, labels, codec, offset_scale, idx, cfg, rng) -> Batch:
    chosen = [items[i] for i in idx]
    if cfg.shuffle_strokes:
        chosen = [shuffle_strokes(it, rng) for it in chosen]
    batch_labels = None
    if model.classifier is not None and labels is not None:
        batch_labels = np.asarray(labels)[idx]
    if model.cfg.mode == "tokenized":
        return token_batch(chosen, batch_labels, codec, model.cfg.max_len, item_ids=idx)
    return continuous_batch(chosen, batch_labels, offset_scale, model.cfg.max_len,
                            item_ids=idx, dtype=model.cfg.np_dtype)


def train_model(
    model: SketchTransformer,
    items: list[np.ndarray],
    labels,
    codec,
    cfg: TrainConfig,
    offset_scale: float = 1.0,
    opt: Adam | None = None,
    log_fp=None,
    stop_fn=None,
) -> Adam:
    """Run cfg.steps optimizer updates (continuing from opt if given).

    stop_fn, when provided, sees each LossReport and may end training
    early by returning True.
    """
    if opt is None:
        opt = Adam(model, cfg.base_lr, cfg.warmup)
    t0 = time.monotonic()
    while opt.state.step < cfg.steps:
        step = opt.state.step + 1
        rng = step_rng(cfg.seed, step)
        replace = cfg.batch_size > len(items)
        idx = rng.choice(len(items), size=min(cfg.batch_size, len(items)), replace=replace)
        batch = make_batch(model, items, labels, codec, offset_scale, idx, cfg, rng)
        report = train_step(model, opt, batch, cfg, rng)
        if log_fp is not None and (step % cfg.log_every == 0 or step == cfg.steps):
            print(report.as_record(step, time.monotonic() - t0), file=log_fp, flush=True)
        if stop_fn is not None and stop_fn(report):
            break
    return opt


# ---- config files ---------------------------------------------------------


def parse_config_file(path: str | Path):
    """key=value file with model.* and train.* sections.

    Returns (model_kwargs, train_kwargs); unknown keys are rejected so
    typos fail loudly.
    """
    from sketchembed.model.config import ModelConfig

    model_fields = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
    train_fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    model_kwargs, train_kwargs = {}, {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TrainingError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("model."):
            sink, fields, name = model_kwargs, model_fields, key[6:]
        elif key.startswith("train."):
            sink, fields, name = train_kwargs, train_fields, key[6:]
        else:
            raise TrainingError(f"{path}:{lineno}: key must start with model. or train.")
        if name not in fields:
            raise TrainingError(f"{path}:{lineno}: unknown key {key!r}")
        sink[name] = _coerce(value, fields[name])
    return model_kwargs, train_kwargs


def _coerce(value: str, type_name: str):
    if type_name == "bool":
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise TrainingError(f"not a boolean: {value!r}")
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    return value
