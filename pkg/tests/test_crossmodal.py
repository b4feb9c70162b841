"""Cross-modal retrieval component tests: convnet, joint heads, store."""

import numpy as np
import pytest

from sketchembed.crossmodal.convnet import (
    FEATURE_DIM,
    INPUT_SIDE,
    RasterEncoder,
    train_raster_encoder,
)
from sketchembed.crossmodal.joint import (
    JOINT_DIM,
    JointConfig,
    JointHeads,
    L2Normalize,
    TripletBatch,
    own_instance_ranks,
    sample_triplets,
    sbir_query,
    train_joint,
    triplet_grads,
    triplet_loss,
    triplet_satisfaction,
)
from sketchembed.crossmodal.store import load_joint, save_joint
from sketchembed.embedding import EmbeddingIndex, knn
from sketchembed.raster import RasterImage


def toy_images(n: int, rng) -> np.ndarray:
    # blocky class-dependent patterns: enough structure for a conv net
    images = np.zeros((n, INPUT_SIDE, INPUT_SIDE))
    for i in range(n):
        if i % 2 == 0:
            images[i, 10:20, :] = 1.0
        else:
            images[i, :, 10:20] = 1.0
        images[i] += 0.05 * rng.random((INPUT_SIDE, INPUT_SIDE))
    return np.clip(images, 0.0, 1.0)


class TestRasterEncoder:
    def test_feature_shape_both_ranks(self, rng):
        enc = RasterEncoder(seed=0)
        imgs = rng.random((3, INPUT_SIDE, INPUT_SIDE))
        feats3 = enc.forward(imgs)
        feats4 = enc.forward(imgs[:, None, :, :])
        assert feats3.shape == (3, FEATURE_DIM)
        assert np.array_equal(feats3, feats4)

    def test_rejects_wrong_side(self, rng):
        enc = RasterEncoder(seed=0)
        with pytest.raises(ValueError, match="64x64"):
            enc.forward(rng.random((1, 32, 32)))

    def test_encode_image_single(self, rng):
        enc = RasterEncoder(seed=0)
        img = RasterImage(INPUT_SIDE, INPUT_SIDE, rng.random((INPUT_SIDE, INPUT_SIDE)))
        feat = enc.encode_image(img)
        assert feat.shape == (FEATURE_DIM,)
        assert np.array_equal(feat, enc.forward(img.pixels[None])[0])

    def test_encode_image_rejects_other_sizes(self):
        enc = RasterEncoder(seed=0)
        with pytest.raises(ValueError, match="64x64"):
            enc.encode_image(RasterImage(32, 32, np.zeros((32, 32))))

    def test_seed_determinism(self, rng):
        imgs = rng.random((2, INPUT_SIDE, INPUT_SIDE))
        a = RasterEncoder(seed=5).forward(imgs)
        b = RasterEncoder(seed=5).forward(imgs)
        assert np.array_equal(a, b)

    def test_conv_backward_matches_finite_differences(self, rng):
        # drive a single conv block through the encoder gradient path
        from sketchembed.crossmodal.convnet import Conv2d

        conv = Conv2d(rng, 1, 2, 8, np.float64)
        x = rng.normal(size=(1, 1, 8, 8))
        dout = rng.normal(size=(1, 2, 4, 4))
        out = conv.forward(x, training=True)
        dx = conv.backward(dout)
        h = 1e-6
        for idx in [(0, 0, 0, 0), (0, 0, 3, 5), (0, 0, 7, 7)]:
            xp = x.copy()
            xp[idx] += h
            num = ((conv.forward(xp) - out) * dout).sum() / h
            assert num == pytest.approx(dx[idx], rel=1e-4, abs=1e-7)

    def test_pretrain_learns_separable_classes(self, rng):
        images = toy_images(24, rng)
        labels = np.arange(24) % 2
        encoder, head, acc = train_raster_encoder(images, labels, 2, steps=60,
                                                  batch_size=12, seed=0)
        assert acc >= 0.9
        assert encoder.frozen is True


class TestL2Normalize:
    def test_unit_rows(self, rng):
        x = rng.normal(size=(4, 6)) * 3
        u = L2Normalize().forward(x)
        assert np.allclose(np.linalg.norm(u, axis=1), 1.0)

    def test_zero_row_guard(self):
        u = L2Normalize().forward(np.zeros((1, 4)))
        assert np.all(u == 0.0)

    def test_backward_matches_finite_differences(self, rng):
        norm = L2Normalize()
        x = rng.normal(size=(2, 5))
        du = rng.normal(size=(2, 5))
        out = norm.forward(x, training=True)
        dx = norm.backward(du)
        h = 1e-6
        for idx in np.ndindex(x.shape):
            xp = x.copy()
            xp[idx] += h
            num = ((norm.forward(xp) - out) * du).sum() / h
            assert num == pytest.approx(dx[idx], rel=1e-4, abs=1e-7)


class TestTriplets:
    def test_loss_hand_cases(self):
        a = np.array([[0.0, 0.0]])
        p = np.array([[1.0, 0.0]])
        n = np.array([[3.0, 0.0]])
        assert triplet_loss(a, p, n, margin=0.5) == 0.0  # 1 - 3 + 0.5 < 0
        assert triplet_loss(a, p, n, margin=2.5) == pytest.approx(0.5)

    def test_negative_margin_rejected(self):
        with pytest.raises(ValueError):
            triplet_loss(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)), -0.1)

    def test_grads_match_finite_differences(self, rng):
        a = rng.normal(size=(3, 4))
        p = rng.normal(size=(3, 4))
        n = rng.normal(size=(3, 4))
        loss, da, dp, dn = triplet_grads(a, p, n, margin=1.0)
        assert loss == pytest.approx(triplet_loss(a, p, n, 1.0))
        h = 1e-6
        for arr, grad in ((a, da), (p, dp), (n, dn)):
            for idx in [(0, 0), (1, 2), (2, 3)]:
                ap = arr.copy()
                ap[idx] += h
                args = [ap if arr is a else a, ap if arr is p else p, ap if arr is n else n]
                num = (triplet_loss(*args, 1.0) - loss) / h
                assert num == pytest.approx(grad[idx], rel=1e-3, abs=1e-6)

    def test_inactive_triplet_zero_grad(self):
        a = np.array([[0.0, 0.0]])
        p = np.array([[0.1, 0.0]])
        n = np.array([[9.0, 0.0]])
        _, da, dp, dn = triplet_grads(a, p, n, margin=0.2)
        assert np.all(da == 0) and np.all(dp == 0) and np.all(dn == 0)

    def test_sample_phase1_constraints(self, rng):
        labels = np.repeat([0, 1, 2], 10)
        batch = sample_triplets(labels, 1, 64, rng)
        assert np.all(labels[batch.anchor_idx] == labels[batch.positive_idx])
        assert np.all(labels[batch.anchor_idx] != labels[batch.negative_idx])

    def test_sample_phase2_constraints(self, rng):
        labels = np.repeat([0, 1], 8)
        batch = sample_triplets(labels, 2, 64, rng)
        assert np.array_equal(batch.positive_idx, batch.anchor_idx)
        assert np.all(batch.negative_idx != batch.anchor_idx)
        assert np.all(labels[batch.negative_idx] == labels[batch.anchor_idx])

    def test_sample_phase1_needs_two_classes(self, rng):
        with pytest.raises(ValueError, match="two categories"):
            sample_triplets(np.zeros(8, dtype=int), 1, 4, rng)

    def test_sample_phase2_needs_two_instances(self, rng):
        with pytest.raises(ValueError, match="two instances"):
            sample_triplets(np.array([0, 1]), 2, 4, rng)

    def test_sample_bad_phase(self, rng):
        with pytest.raises(ValueError, match="phase"):
            sample_triplets(np.array([0, 0, 1, 1]), 3, 4, rng)

    def test_batch_check_catches_violations(self):
        labels = np.array([0, 0, 1, 1])
        with pytest.raises(ValueError, match="positive category"):
            TripletBatch(np.array([0]), np.array([2]), np.array([3]), 1).check(labels)
        with pytest.raises(ValueError, match="phase-1 negative"):
            TripletBatch(np.array([0]), np.array([1]), np.array([1]), 1).check(labels)
        with pytest.raises(ValueError, match="own instance"):
            TripletBatch(np.array([0]), np.array([1]), np.array([1]), 2).check(labels)


class TestJointHeads:
    def test_embeddings_unit_norm_joint_dim(self, rng):
        heads = JointHeads(vector_dim=16, raster_dim=FEATURE_DIM, n_classes=3, seed=0)
        z = rng.normal(size=(5, 16)).astype(np.float32)
        feats = rng.normal(size=(5, FEATURE_DIM)).astype(np.float32)
        uv = heads.embed_vector(z)
        ur = heads.embed_raster(feats)
        assert uv.shape == (5, JOINT_DIM)
        assert ur.shape == (5, JOINT_DIM)
        for u in (uv, ur):
            norms = np.linalg.norm(u, axis=1)
            assert np.all((np.abs(norms - 1.0) < 1e-5) | (norms == 0.0))

    def test_training_improves_satisfaction_and_freezes_nothing_it_shouldnt(self, rng):
        n, vec_d = 40, 8
        labels = np.arange(n) % 2
        z = rng.normal(size=(n, vec_d)) + labels[:, None] * 3.0
        feats = rng.normal(size=(n, FEATURE_DIM)) + labels[:, None] * 3.0
        heads = JointHeads(vector_dim=vec_d, raster_dim=FEATURE_DIM, n_classes=2, seed=0)
        z_in, f_in = z.copy(), feats.copy()
        cfg = JointConfig(phase1_steps=60, phase2_steps=30, batch_size=16, seed=0)
        phases = []
        train_joint(heads, z, feats, labels, cfg,
                    phase_end=lambda ph, h: phases.append(ph))
        assert phases == [1, 2]
        # frozen inputs: training must not write into the feature arrays
        assert np.array_equal(z, z_in)
        assert np.array_equal(feats, f_in)
        sat = triplet_satisfaction(heads, z, feats, labels, phase=1, n_triplets=200, seed=1)
        assert sat >= 0.7

    def test_train_joint_rejects_misaligned_arrays(self, rng):
        heads = JointHeads(vector_dim=4, raster_dim=FEATURE_DIM, n_classes=2, seed=0)
        with pytest.raises(ValueError, match="align"):
            train_joint(heads, rng.normal(size=(4, 4)), rng.normal(size=(3, FEATURE_DIM)),
                        np.array([0, 1, 0, 1]), JointConfig(phase1_steps=1, phase2_steps=0))


class TestRetrievalHelpers:
    def make_heads_and_data(self, rng, n=12):
        labels = np.arange(n) % 2
        z = rng.normal(size=(n, 8))
        feats = rng.normal(size=(n, FEATURE_DIM))
        heads = JointHeads(vector_dim=8, raster_dim=FEATURE_DIM, n_classes=2, seed=0)
        return heads, z, feats, labels

    def test_own_instance_ranks_bounds(self, rng):
        heads, z, feats, _ = self.make_heads_and_data(rng)
        ranks = own_instance_ranks(heads, z, feats)
        assert ranks.shape == (12,)
        assert ranks.min() >= 1 and ranks.max() <= 12

    def test_sbir_query_matches_manual_knn(self, rng):
        heads, z, feats, _ = self.make_heads_and_data(rng)
        u_r = heads.embed_raster(feats)
        index = EmbeddingIndex(u_r, [f"r{i}" for i in range(len(u_r))], metric="euclidean")
        got = sbir_query(heads, z[0], index, k=5)
        manual = knn(index, heads.embed_vector(z[:1])[0], 5)
        assert got == manual


class TestJointStore:
    def test_round_trip_preserves_forward(self, rng, tmp_path):
        encoder = RasterEncoder(seed=3)
        heads = JointHeads(vector_dim=8, raster_dim=FEATURE_DIM, n_classes=2, seed=4)
        path = tmp_path / "joint.skjm"
        save_joint(path, encoder, heads, vector_dim=8, class_names=["a", "b"])
        enc2, heads2, meta = load_joint(path)
        assert meta["vector_dim"] == 8
        assert meta["raster_dim"] == FEATURE_DIM
        assert meta["n_classes"] == 2
        assert meta["class_names"] == ["a", "b"]
        assert enc2.frozen is True
        imgs = rng.random((2, INPUT_SIDE, INPUT_SIDE)).astype(np.float32)
        assert np.allclose(enc2.forward(imgs), encoder.forward(imgs), atol=1e-6)
        z = rng.normal(size=(2, 8)).astype(np.float32)
        assert np.allclose(heads2.embed_vector(z), heads.embed_vector(z), atol=1e-6)

    def test_resave_bit_exact(self, tmp_path):
        encoder = RasterEncoder(seed=0)
        heads = JointHeads(vector_dim=4, raster_dim=FEATURE_DIM, n_classes=3, seed=0)
        p1, p2 = tmp_path / "a.skjm", tmp_path / "b.skjm"
        save_joint(p1, encoder, heads, vector_dim=4, class_names=[])
        enc2, heads2, meta = load_joint(p1)
        save_joint(p2, enc2, heads2, meta["vector_dim"], meta["class_names"])
        assert p1.read_bytes() == p2.read_bytes()
