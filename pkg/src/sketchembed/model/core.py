"""Parameter containers and primitive differentiable layers.

Every layer follows the same discipline: forward with training=True
pushes whatever backward needs onto a per-instance stack, backward pops
it and accumulates parameter gradients into self.G. Backward calls must
mirror forward calls in reverse order. Inference forwards write no
state, so concurrent reads of a shared model are safe.
"""

from __future__ import annotations

import numpy as np


class Module:
    """Tree of named parameters with parallel gradient slots."""

    def __init__(self):
        self.P: dict[str, np.ndarray] = {}
        self.G: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}
        self._stack: list = []

    def add_param(self, name: str, value: np.ndarray) -> np.ndarray:
        self.P[name] = value
        self.G[name] = np.zeros_like(value)
        return value

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def param_items(self, prefix: str = ""):
        """All (path, array) parameter pairs, depth-first, creation order."""
        for name, value in self.P.items():
            yield prefix + name, value
        for name, child in self._children.items():
            yield from child.param_items(prefix + name + ".")

    def grad_items(self, prefix: str = ""):
        for name, value in self.G.items():
            yield prefix + name, value
        for name, child in self._children.items():
            yield from child.grad_items(prefix + name + ".")

    def zero_grads(self):
        for g in self.G.values():
            g[...] = 0
        for child in self._children.values():
            child.zero_grads()

    def load_state(self, state: dict[str, np.ndarray]):
        """Copy values into existing parameter arrays, by path."""
        own = dict(self.param_items())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, value in own.items():
            if state[name].shape != value.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {value.shape}")
            value[...] = state[name]

    def clear_stacks(self):
        self._stack.clear()
        for child in self._children.values():
            child.clear_stacks()


def glorot(rng: np.random.Generator, d_in: int, d_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out)).astype(dtype)


class Dense(Module):
    """Affine map over the last axis."""

    def __init__(self, rng, d_in: int, d_out: int, dtype, bias: bool = True):
        super().__init__()
        self.add_param("W", glorot(rng, d_in, d_out, dtype))
        if bias:
            self.add_param("b", np.zeros(d_out, dtype=dtype))
        self.bias = bias

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        out = x @ self.P["W"]
        if self.bias:
            out = out + self.P["b"]
        if training:
            self._stack.append(x)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._stack.pop()
        flat_x = x.reshape(-1, x.shape[-1])
        flat_d = dout.reshape(-1, dout.shape[-1])
        self.G["W"] += flat_x.T @ flat_d
        if self.bias:
            self.G["b"] += flat_d.sum(axis=0)
        return dout @ self.P["W"].T


class LayerNorm(Module):
    """Normalization over the last axis with learned gain and bias."""

    EPS = 1e-5

    def __init__(self, d: int, dtype):
        super().__init__()
        self.add_param("g", np.ones(d, dtype=dtype))
        self.add_param("b", np.zeros(d, dtype=dtype))

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mu) * inv
        if training:
            self._stack.append((xhat, inv))
        return self.P["g"] * xhat + self.P["b"]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        xhat, inv = self._stack.pop()
        d = xhat.shape[-1]
        self.G["g"] += (dout * xhat).reshape(-1, d).sum(axis=0)
        self.G["b"] += dout.reshape(-1, d).sum(axis=0)
        dxhat = dout * self.P["g"]
        # standard layer-norm backward collapsed to two row statistics
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * (dxhat - m1 - xhat * m2)


class Embedding(Module):
    """Token lookup scaled by sqrt(d_model)."""

    def __init__(self, rng, vocab_size: int, d_model: int, dtype):
        super().__init__()
        table = rng.normal(0.0, 1.0 / np.sqrt(d_model), size=(vocab_size, d_model))
        self.add_param("table", table.astype(dtype))
        self.scale = float(np.sqrt(d_model))

    def forward(self, ids: np.ndarray, training: bool = False) -> np.ndarray:
        if training:
            self._stack.append(ids)
        return self.P["table"][ids] * self.scale

    def backward(self, dout: np.ndarray) -> None:
        ids = self._stack.pop()
        np.add.at(self.G["table"], ids.ravel(), dout.reshape(-1, dout.shape[-1]) * self.scale)


class Dropout(Module):
    """Inverted dropout; identity when rate is 0 or at inference."""

    def __init__(self, rate: float):
        super().__init__()
        self.rate = rate

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        if not training or self.rate == 0.0:
            if training:
                self._stack.append(None)
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        self._stack.append(mask)
        return x * mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        mask = self._stack.pop()
        return dout if mask is None else dout * mask


def masked_softmax(scores: np.ndarray, keep: np.ndarray | None) -> np.ndarray:
    """Row-wise softmax over the last axis restricted to kept positions.

    Dropped positions get exactly zero weight. A row with nothing kept
    comes back all-zero rather than NaN, so downstream output rows are
    zero as documented.
    """
    if keep is not None:
        scores = np.where(keep, scores, -np.inf)
    rowmax = scores.max(axis=-1, keepdims=True)
    rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
    exps = np.exp(scores - rowmax)
    denom = exps.sum(axis=-1, keepdims=True)
    return exps / np.where(denom > 0.0, denom, 1.0)


def softmax_backward(weights: np.ndarray, dweights: np.ndarray) -> np.ndarray:
    """Jacobian-vector product of softmax given its output.

    Rows that were fully masked have all-zero weights and propagate zero,
    matching the forward convention.
    """
    inner = (dweights * weights).sum(axis=-1, keepdims=True)
    return weights * (dweights - inner)


def positional_encoding(max_len: int, d_model: int, dtype) -> np.ndarray:
    """Fixed sinusoidal position table, (max_len, d_model)."""
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(d_model, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, (2.0 * np.floor(i / 2.0)) / d_model)
    table = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return table.astype(dtype)
