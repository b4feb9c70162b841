"""Layer primitives and transformer wiring tests."""

import numpy as np
import pytest

from sketchembed import tokens
from sketchembed.model.config import ModelConfig
from sketchembed.model.core import (
    Dense,
    Dropout,
    Embedding,
    LayerNorm,
    Module,
    masked_softmax,
    positional_encoding,
    softmax_backward,
)
from sketchembed.model.network import (
    SketchTransformer,
    causal_keep,
    continuous_keep,
)


def tiny_cfg(**overrides) -> ModelConfig:
    base = dict(
        mode="tokenized",
        vocab_size=16,
        d_model=8,
        n_layers=1,
        n_heads=2,
        d_ff=16,
        max_len=10,
        dropout=0.0,
        dtype="float64",
    )
    base.update(overrides)
    return ModelConfig(**base)


class TestDense:
    def test_forward_is_affine(self, rng):
        layer = Dense(rng, 3, 2, np.float64)
        x = rng.normal(size=(4, 3))
        assert np.allclose(layer.forward(x), x @ layer.P["W"] + layer.P["b"])

    def test_no_bias(self, rng):
        layer = Dense(rng, 3, 2, np.float64, bias=False)
        assert "b" not in layer.P
        x = rng.normal(size=(4, 3))
        assert np.allclose(layer.forward(x), x @ layer.P["W"])

    def test_backward_matches_finite_differences(self, rng):
        layer = Dense(rng, 3, 2, np.float64)
        x = rng.normal(size=(5, 3))
        dout = rng.normal(size=(5, 2))
        out = layer.forward(x, training=True)
        dx = layer.backward(dout)
        h = 1e-6
        for idx in np.ndindex(x.shape):
            xp = x.copy()
            xp[idx] += h
            num = ((layer.forward(xp) - out) * dout).sum() / h
            assert num == pytest.approx(dx[idx], rel=1e-4, abs=1e-7)

    def test_gradients_accumulate(self, rng):
        layer = Dense(rng, 2, 2, np.float64)
        x = rng.normal(size=(3, 2))
        dout = rng.normal(size=(3, 2))
        layer.forward(x, training=True)
        layer.backward(dout)
        first = layer.G["W"].copy()
        layer.forward(x, training=True)
        layer.backward(dout)
        assert np.allclose(layer.G["W"], 2 * first)


class TestLayerNorm:
    def test_output_statistics(self, rng):
        ln = LayerNorm(16, np.float64)
        out = ln.forward(rng.normal(2.0, 3.0, size=(4, 16)))
        assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-9)
        assert np.allclose(out.var(axis=-1), 1.0, atol=1e-3)

    def test_gain_bias_applied(self, rng):
        ln = LayerNorm(4, np.float64)
        ln.P["g"][:] = 2.0
        ln.P["b"][:] = 1.0
        out = ln.forward(rng.normal(size=(3, 4)))
        assert np.allclose(out.mean(axis=-1), 1.0, atol=1e-9)

    def test_backward_matches_finite_differences(self, rng):
        ln = LayerNorm(6, np.float64)
        ln.P["g"][:] = rng.normal(1.0, 0.2, size=6)
        x = rng.normal(size=(2, 6))
        dout = rng.normal(size=(2, 6))
        out = ln.forward(x, training=True)
        dx = ln.backward(dout)
        h = 1e-6
        for idx in np.ndindex(x.shape):
            xp = x.copy()
            xp[idx] += h
            num = ((ln.forward(xp) - out) * dout).sum() / h
            assert num == pytest.approx(dx[idx], rel=1e-3, abs=1e-6)


class TestEmbedding:
    def test_lookup_scaled(self, rng):
        emb = Embedding(rng, 10, 4, np.float64)
        ids = np.array([[1, 5], [0, 9]])
        assert np.allclose(emb.forward(ids), emb.P["table"][ids] * 2.0)

    def test_backward_scatters(self, rng):
        emb = Embedding(rng, 10, 4, np.float64)
        ids = np.array([[3, 3]])
        emb.forward(ids, training=True)
        dout = np.ones((1, 2, 4))
        emb.backward(dout)
        assert np.allclose(emb.G["table"][3], 2 * 2.0)  # two hits, scale sqrt(4)
        assert np.allclose(emb.G["table"][0], 0.0)


class TestDropout:
    def test_rate_zero_is_identity(self, rng):
        drop = Dropout(0.0)
        x = rng.normal(size=(3, 3))
        assert drop.forward(x, training=True) is x
        assert np.array_equal(drop.backward(x), x)

    def test_inference_is_identity(self, rng):
        drop = Dropout(0.5)
        x = rng.normal(size=(3, 3))
        assert drop.forward(x, training=False) is x

    def test_training_needs_rng(self):
        with pytest.raises(ValueError, match="rng"):
            Dropout(0.5).forward(np.ones((2, 2)), training=True)

    def test_mask_scales_survivors(self, rng):
        drop = Dropout(0.5)
        x = np.ones((200, 200))
        out = drop.forward(x, training=True, rng=rng)
        assert set(np.unique(out)) <= {0.0, 2.0}
        assert out.mean() == pytest.approx(1.0, abs=0.05)


class TestMaskedSoftmax:
    def test_rows_sum_to_one(self, rng):
        scores = rng.normal(size=(4, 7))
        keep = rng.random((4, 7)) > 0.3
        keep[:, 0] = True
        out = masked_softmax(scores, keep)
        assert np.allclose(out.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(out[~keep] == 0.0)

    def test_no_mask(self, rng):
        scores = rng.normal(size=(3, 5))
        out = masked_softmax(scores, None)
        assert np.allclose(out.sum(axis=-1), 1.0)

    def test_fully_masked_row_is_zero(self):
        out = masked_softmax(np.ones((2, 3)), np.zeros((2, 3), dtype=bool))
        assert np.all(out == 0.0)

    def test_softmax_backward_matches_jacobian(self, rng):
        scores = rng.normal(size=(5,))
        weights = masked_softmax(scores[None], None)[0]
        dweights = rng.normal(size=(5,))
        jac = np.diag(weights) - np.outer(weights, weights)
        assert np.allclose(softmax_backward(weights, dweights), jac @ dweights)


class TestPositionalEncoding:
    def test_hand_values(self):
        pe = positional_encoding(4, 6, np.float64)
        assert pe[0].tolist() == [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
        assert pe[2, 0] == pytest.approx(np.sin(2.0))
        assert pe[2, 1] == pytest.approx(np.cos(2.0))
        assert pe[3, 2] == pytest.approx(np.sin(3.0 / 10000.0 ** (2.0 / 6.0)))

    def test_bounded(self):
        pe = positional_encoding(50, 16, np.float64)
        assert np.abs(pe).max() <= 1.0


class TestModuleTree:
    def test_param_paths_depth_first(self, rng):
        root = Module()
        root.add_param("w", np.zeros(2))
        child = root.add_module("inner", Dense(rng, 2, 2, np.float64))
        paths = [name for name, _ in root.param_items()]
        assert paths == ["w", "inner.W", "inner.b"]
        assert dict(root.grad_items()).keys() == dict(root.param_items()).keys()
        assert child is root._children["inner"]

    def test_zero_grads_recursive(self, rng):
        dense = Dense(rng, 2, 2, np.float64)
        dense.forward(np.ones((1, 2)), training=True)
        dense.backward(np.ones((1, 2)))
        assert np.any(dense.G["W"] != 0)
        dense.zero_grads()
        assert np.all(dense.G["W"] == 0)

    def test_load_state_strict(self, rng):
        a = Dense(rng, 2, 3, np.float64)
        b = Dense(np.random.default_rng(9), 2, 3, np.float64)
        b.load_state(dict(a.param_items()))
        assert np.array_equal(b.P["W"], a.P["W"])
        with pytest.raises(KeyError, match="mismatch"):
            b.load_state({"W": a.P["W"]})  # missing "b"
        bad = dict(a.param_items())
        bad["W"] = np.zeros((3, 2))
        with pytest.raises(ValueError, match="shape"):
            b.load_state(bad)

    def test_inference_leaves_no_stack_state(self):
        model = SketchTransformer(tiny_cfg(), seed=0)
        enc_in = np.array([[1, 5, 6, 2, 0, 0]])
        model.forward(enc_in, enc_in[:, :-1])

        def total_stack(mod):
            n = len(mod._stack)
            return n + sum(total_stack(c) for c in mod._children.values())

        assert total_stack(model) == 0


class TestMasks:
    def test_causal_keep_shape_and_content(self):
        keep = causal_keep(4)
        assert keep.shape == (1, 1, 4, 4)
        assert np.array_equal(keep[0, 0], np.tril(np.ones((4, 4), dtype=bool)))

    def test_continuous_keep_stops_at_terminator(self):
        rows = np.zeros((2, 5, 5))
        rows[0, 2, 4] = 1.0  # terminator at position 2
        keep = continuous_keep(rows)
        assert keep[0].tolist() == [True, True, True, False, False]
        assert keep[1].tolist() == [True] * 5  # no terminator keeps everything


class TestTransformer:
    def test_tokenized_shapes(self):
        cfg = tiny_cfg(n_classes=3)
        model = SketchTransformer(cfg, seed=0)
        enc_in = np.array([[1, 5, 6, 2, 0, 0], [1, 7, 2, 0, 0, 0]])
        out = model.forward(enc_in, enc_in[:, :-1])
        assert out["z"].shape == (2, cfg.d_model)
        assert out["dec_out"].shape == (2, 5, cfg.vocab_size)
        assert out["class_logits"].shape == (2, 3)

    def test_no_classifier_by_default(self):
        model = SketchTransformer(tiny_cfg(), seed=0)
        enc_in = np.array([[1, 5, 2, 0]])
        assert model.forward(enc_in, enc_in[:, :-1])["class_logits"] is None

    def test_continuous_shapes(self):
        cfg = tiny_cfg(mode="continuous")
        model = SketchTransformer(cfg, seed=0)
        rows = np.zeros((2, 6, 5))
        rows[:, 0, 2] = 1.0
        rows[:, -1, 4] = 1.0
        out = model.forward(rows, rows[:, :-1])
        assert out["dec_out"].shape == (2, 5, 5)

    def test_input_keep_tokenized(self):
        model = SketchTransformer(tiny_cfg(), seed=0)
        keep = model.input_keep(np.array([[1, 5, 2, 0, 0]]))
        assert keep.tolist() == [[True, True, True, False, False]]

    def test_max_len_guard(self):
        model = SketchTransformer(tiny_cfg(max_len=4), seed=0)
        too_long = np.array([[1, 5, 5, 5, 2]])
        with pytest.raises(ValueError, match="max_len"):
            model.encode(too_long)

    def test_seed_determinism(self):
        a = SketchTransformer(tiny_cfg(), seed=3)
        b = SketchTransformer(tiny_cfg(), seed=3)
        c = SketchTransformer(tiny_cfg(), seed=4)
        pa, pb, pc = dict(a.param_items()), dict(b.param_items()), dict(c.param_items())
        assert all(np.array_equal(pa[k], pb[k]) for k in pa)
        assert any(not np.array_equal(pa[k], pc[k]) for k in pa)

    def test_autoregress_token_framing(self):
        model = SketchTransformer(tiny_cfg(), seed=0)
        z = np.zeros((2, 8))
        outs = model.autoregress(z)
        for row in outs:
            assert row[0] == tokens.SOS
            assert len(row) <= model.cfg.max_len
            if tokens.EOS in row:
                assert row[-1] == tokens.EOS
                assert np.count_nonzero(row == tokens.EOS) == 1

    def test_autoregress_continuous_rows(self):
        model = SketchTransformer(tiny_cfg(mode="continuous"), seed=0)
        outs = model.autoregress(np.zeros((1, 8)), max_steps=5)
        rows = outs[0]
        assert rows.shape[1] == 5
        assert len(rows) <= 5
        # one-hot pen state per emitted row
        assert np.allclose(rows[:, 2:].sum(axis=1), 1.0)

    def test_expand_modes_agree_on_shape(self):
        for mode in ("affine", "tile"):
            model = SketchTransformer(tiny_cfg(expand_mode=mode), seed=0)
            mem = model.expand.forward(np.zeros((3, 8)))
            assert mem.shape == (3, model.cfg.max_len, 8)

    def test_tile_expand_adds_positions(self):
        model = SketchTransformer(tiny_cfg(expand_mode="tile"), seed=0)
        z = np.ones((1, 8))
        mem = model.expand.forward(z)
        pe = positional_encoding(model.cfg.max_len, 8, np.float64)
        assert np.allclose(mem[0], 1.0 + pe)


class TestConfig:
    def test_rejects_bad_mode(self):
        with pytest.raises(ValueError, match="mode"):
            ModelConfig(mode="both")

    def test_rejects_indivisible_heads(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(d_model=10, n_heads=4)

    def test_rejects_tiny_vocab(self):
        with pytest.raises(ValueError, match="vocab_size"):
            ModelConfig(vocab_size=4)

    def test_round_trip_dict(self):
        cfg = ModelConfig(d_model=64, n_heads=4, n_classes=7)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_ignores_unknown_keys(self):
        cfg = ModelConfig.from_dict({"d_model": 64, "n_heads": 4, "stale": 1})
        assert cfg.d_model == 64

    def test_alpha(self):
        cfg = ModelConfig(d_model=64, n_heads=4)
        assert cfg.d_head == 16
        assert cfg.alpha == 0.25
