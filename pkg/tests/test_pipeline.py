"""Pipeline glue tests against the session-trained toy model."""

import numpy as np
import pytest

from sketchembed.codebook import Codebook
from sketchembed.dataset import sketch_of_item
from sketchembed.model.config import ModelConfig
from sketchembed.model.network import SketchTransformer
from sketchembed.pipeline import PipelineError, SketchPipeline, load_pipeline
from sketchembed.sketch import Sketch
from sketchembed.tokens import GridSpec


@pytest.fixture(scope="module")
def sample(toy_dataset):
    items, labels = toy_dataset.split("test")
    return sketch_of_item(items[0], label=int(labels[0]))


class TestConstruction:
    def test_tokenized_without_codec(self):
        model = SketchTransformer(ModelConfig(vocab_size=20, d_model=8, n_layers=1,
                                              n_heads=2, d_ff=16, dropout=0.0))
        with pytest.raises(PipelineError, match="needs a codebook"):
            SketchPipeline(model=model, codec=None)

    def test_vocab_mismatch(self):
        model = SketchTransformer(ModelConfig(vocab_size=20, d_model=8, n_layers=1,
                                              n_heads=2, d_ff=16, dropout=0.0))
        with pytest.raises(PipelineError, match="vocab"):
            SketchPipeline(model=model, codec=GridSpec(side=10))  # vocab 104

    def test_continuous_rejects_codec(self):
        model = SketchTransformer(ModelConfig(mode="continuous", d_model=8, n_layers=1,
                                              n_heads=2, d_ff=16, dropout=0.0))
        with pytest.raises(PipelineError, match="no codec"):
            SketchPipeline(model=model, codec=GridSpec(side=4))

    def test_scheme_property(self, toy_pipe):
        assert toy_pipe.scheme == "dict"
        grid_model = SketchTransformer(ModelConfig(vocab_size=20, d_model=8, n_layers=1,
                                                   n_heads=2, d_ff=16, dropout=0.0))
        assert SketchPipeline(model=grid_model, codec=GridSpec(side=4)).scheme == "grid"
        cont = SketchTransformer(ModelConfig(mode="continuous", d_model=8, n_layers=1,
                                             n_heads=2, d_ff=16, dropout=0.0))
        assert SketchPipeline(model=cont, codec=None).scheme == "continuous"


class TestEmbed:
    def test_embedding_shape_and_determinism(self, toy_pipe, sample):
        z = toy_pipe.embed(sample)
        assert z.shape == (toy_pipe.model.cfg.d_model,)
        assert np.array_equal(z, toy_pipe.embed(sample))

    def test_embed_many_stacks(self, toy_pipe, toy_dataset):
        items, labels = toy_dataset.split("test")
        sketches = [sketch_of_item(it) for it in items[:3]]
        zs = toy_pipe.embed_many(sketches)
        assert zs.shape == (3, toy_pipe.model.cfg.d_model)
        assert np.array_equal(zs[0], toy_pipe.embed(sketches[0]))

    def test_prepare_is_single_item_batch(self, toy_pipe, sample):
        batch = toy_pipe.prepare(sample)
        assert batch.shape[0] == 1
        assert batch[0, 0] == 1  # SOS leads the sequence

    def test_prepare_rejects_oversize(self, toy_pipe):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 255, size=(toy_pipe.model.cfg.max_len + 8, 2))
        huge = Sketch((pts,))
        with pytest.raises(PipelineError, match="tokens"):
            # epsilon 0 keeps every point, so the token budget must blow
            SketchPipeline(
                model=toy_pipe.model, codec=toy_pipe.codec,
                offset_scale=toy_pipe.offset_scale, rdp_epsilon=0.0,
            ).prepare(huge)


class TestDecodeApplications:
    def test_reconstruct_returns_centered_sketch(self, toy_pipe, sample):
        out = toy_pipe.reconstruct(sample)
        assert isinstance(out, Sketch)
        x0, y0, x1, y1 = out.bounds()
        assert (x0 + x1) / 2 == pytest.approx(127.5)
        assert (y0 + y1) / 2 == pytest.approx(127.5)

    def test_interpolate_frames_and_endpoints(self, toy_pipe, toy_dataset):
        items, _ = toy_dataset.split("test")
        a, b = sketch_of_item(items[0]), sketch_of_item(items[1])
        frames = toy_pipe.interpolate(a, b, steps=4)
        assert len(frames) == 4
        recon_a = toy_pipe.reconstruct(a)
        assert all(np.array_equal(x, y) for x, y in zip(frames[0].strokes, recon_a.strokes))

    def test_perturb_sigma_zero_equals_reconstruct(self, toy_pipe, sample):
        base = toy_pipe.reconstruct(sample)
        same = toy_pipe.perturb_sketch(sample, 0.0)
        assert all(np.array_equal(x, y) for x, y in zip(base.strokes, same.strokes))

    def test_perturb_seed_determinism(self, toy_pipe, sample):
        a = toy_pipe.perturb_sketch(sample, 0.5, seed=3)
        b = toy_pipe.perturb_sketch(sample, 0.5, seed=3)
        assert all(np.array_equal(x, y) for x, y in zip(a.strokes, b.strokes))

    def test_classify_names_a_known_class(self, toy_pipe, sample):
        name, probs = toy_pipe.classify_sketch(sample)
        assert name in toy_pipe.class_names
        assert probs.sum() == pytest.approx(1.0)
        assert len(probs) == len(toy_pipe.class_names)

    def test_classify_without_head(self, toy_pipe, sample):
        import dataclasses

        headless_cfg = dataclasses.replace(toy_pipe.model.cfg, n_classes=0)
        bare = SketchPipeline(
            model=SketchTransformer(headless_cfg, seed=0),
            codec=toy_pipe.codec,
            offset_scale=toy_pipe.offset_scale,
        )
        with pytest.raises(PipelineError, match="classifier"):
            bare.classify_sketch(sample)


class TestLoadPipeline:
    def test_round_trip_via_files(self, toy_paths, toy_pipe, sample):
        again = load_pipeline(toy_paths["checkpoint"], toy_paths["codebook"])
        assert again.scheme == "dict"
        assert again.offset_scale == toy_pipe.offset_scale
        assert again.class_names == toy_pipe.class_names
        assert np.array_equal(again.embed(sample), toy_pipe.embed(sample))

    def test_dict_checkpoint_requires_codebook_path(self, toy_paths):
        with pytest.raises(PipelineError, match="codebook"):
            load_pipeline(toy_paths["checkpoint"], None)

    def test_train_meta_strings(self, toy_pipe):
        meta = toy_pipe.train_meta()
        assert meta["scheme"] == "dict"
        assert float(meta["offset_scale"]) == toy_pipe.offset_scale
        assert meta["grid_side"] == "0"
