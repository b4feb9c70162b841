"""Codebook, k-means, and dictionary tokenizer tests."""

import numpy as np
import pytest

from sketchembed.codebook import (
    Codebook,
    CodebookError,
    dict_decode,
    dict_encode,
    fit_codebook,
    kmeans,
    load_codebook,
    nearest_centroid,
    save_codebook,
)
from sketchembed.tokens import FIRST_CONTENT


def grid_centroids(side: int = 4) -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float))
    return np.column_stack([xs.ravel(), ys.ravel()])


@pytest.fixture
def cb():
    return Codebook(centroids=grid_centroids(), lift_fraction=0.2, seed=0, offset_scale=2.0)


class TestCodebookValidation:
    def test_rejects_duplicates(self):
        pts = grid_centroids()
        pts[3] = pts[0]
        with pytest.raises(CodebookError, match="duplicate"):
            Codebook(centroids=pts, lift_fraction=0.2, seed=0)

    def test_rejects_bad_shape(self):
        with pytest.raises(CodebookError, match="K x 2"):
            Codebook(centroids=np.zeros((4, 3)), lift_fraction=0.2, seed=0)

    def test_rejects_single_centroid(self):
        with pytest.raises(CodebookError, match="K x 2"):
            Codebook(centroids=np.zeros((1, 2)), lift_fraction=0.2, seed=0)

    def test_rejects_nonfinite(self):
        pts = grid_centroids()
        pts[0, 0] = np.inf
        with pytest.raises(CodebookError, match="finite"):
            Codebook(centroids=pts, lift_fraction=0.2, seed=0)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(CodebookError, match="offset_scale"):
            Codebook(centroids=grid_centroids(), lift_fraction=0.2, seed=0, offset_scale=0.0)

    def test_centroids_snapped_to_f32_exact(self):
        raw = grid_centroids() + 1e-9  # not representable in f32
        cb = Codebook(centroids=raw, lift_fraction=0.2, seed=0)
        assert np.array_equal(cb.centroids, raw.astype(np.float32).astype(np.float64))

    def test_vocab_size(self, cb):
        assert cb.k == 16
        assert cb.vocab_size == 16 + FIRST_CONTENT


class TestNearestCentroid:
    def test_matches_brute_force(self, rng):
        centroids = rng.normal(size=(32, 2))
        pts = rng.normal(size=(500, 2))
        got = nearest_centroid(pts, centroids, chunk=64)
        brute = np.array([
            int(np.argmin(((centroids - p) ** 2).sum(axis=1))) for p in pts
        ])
        assert np.array_equal(got, brute)

    def test_tie_goes_to_lower_index(self):
        centroids = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert nearest_centroid(np.array([[0.0, 0.0]]), centroids)[0] == 0


class TestKmeans:
    def test_objective_non_increasing(self, rng):
        pts = rng.normal(size=(400, 2))
        _, trace = kmeans(pts, 8, seed=1)
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))

    def test_recovers_separated_clusters(self, rng):
        true = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]])
        pts = np.concatenate([t + rng.normal(0, 0.1, size=(100, 2)) for t in true])
        centers, _ = kmeans(pts, 3, seed=0)
        matched = centers[np.argsort(centers[:, 0] + 100 * centers[:, 1])]
        expected = true[np.argsort(true[:, 0] + 100 * true[:, 1])]
        assert np.abs(matched - expected).max() < 0.2

    def test_deterministic(self, rng):
        pts = rng.normal(size=(300, 2))
        a, ta = kmeans(pts, 5, seed=7)
        b, tb = kmeans(pts, 5, seed=7)
        assert np.array_equal(a, b)
        assert ta == tb

    def test_k_exceeds_distinct_points(self):
        pts = np.tile([[1.0, 1.0], [2.0, 2.0]], (10, 1))
        with pytest.raises(CodebookError, match="distinct"):
            kmeans(pts, 3, seed=0)


class TestFitCodebook:
    def corpus(self, rng, n=30):
        items = []
        for _ in range(n):
            length = rng.integers(4, 12)
            seq = np.zeros((length, 3))
            seq[1:, :2] = rng.normal(0, 3, size=(length - 1, 2))
            seq[rng.integers(1, length), 2] = 1.0
            seq[-1, 2] = 1.0
            items.append(seq)
        return items

    def test_basic_fit(self, rng):
        cb = fit_codebook(self.corpus(rng), k=8, sample_size=500, seed=0)
        assert cb.k == 8
        assert len(cb.objective_trace) >= 1

    def test_empty_corpus(self):
        with pytest.raises(CodebookError, match="empty"):
            fit_codebook([], k=4)

    def test_k_larger_than_sample(self, rng):
        with pytest.raises(CodebookError, match="sample_size"):
            fit_codebook(self.corpus(rng), k=100, sample_size=50)

    def test_offset_scale_divides_sample(self, rng):
        items = self.corpus(rng)
        unit = fit_codebook(items, k=6, sample_size=400, seed=3, offset_scale=1.0)
        scaled = fit_codebook(items, k=6, sample_size=400, seed=3, offset_scale=2.0)
        assert np.allclose(
            scaled.centroids, (unit.centroids.astype(np.float64) / 2.0).astype(np.float32),
            atol=1e-7,
        )
        assert scaled.offset_scale == 2.0


class TestDictCodec:
    def test_round_trip_exact_on_centroid_motions(self, cb):
        # offsets that are exact centroid multiples survive encode/decode
        ids = np.array([5, 2, 9, 1])
        offsets = cb.centroids[ids] * cb.offset_scale
        seq = np.column_stack([offsets, [0.0, 1.0, 0.0, 1.0]])
        token_seq = dict_encode(seq, cb)
        back = dict_decode(token_seq, cb)
        assert np.array_equal(back, seq)

    def test_stroke_boundaries_from_pen_column(self, cb):
        seq = np.zeros((5, 3))
        seq[:, :2] = cb.centroids[2] * cb.offset_scale
        seq[1, 2] = 1.0
        seq[4, 2] = 1.0
        toks = dict_encode(seq, cb)
        back = dict_decode(toks, cb)
        assert back[:, 2].tolist() == [0.0, 1.0, 0.0, 0.0, 1.0]

    def test_trailing_open_stroke_kept(self, cb):
        seq = np.zeros((3, 3))
        seq[1, 2] = 1.0  # second stroke never lifts
        back = dict_decode(dict_encode(seq, cb), cb)
        assert len(back) == 3
        assert back[-1, 2] == 1.0  # decoder closes the final stroke

    def test_vocab_mismatch(self, cb):
        other = Codebook(centroids=grid_centroids(5), lift_fraction=0.2, seed=0)
        toks = dict_encode(np.zeros((3, 3)), other)
        with pytest.raises(CodebookError, match="vocab"):
            dict_decode(toks, cb)

    def test_max_len_forwarded(self, cb):
        seq = np.zeros((10, 3))
        seq[-1, 2] = 1.0
        toks = dict_encode(seq, cb, max_len=16)
        assert len(toks) == 16


class TestCodebookIO:
    def test_round_trip(self, cb, tmp_path):
        path = tmp_path / "cb.skcb"
        save_codebook(path, cb)
        back = load_codebook(path)
        assert np.array_equal(back.centroids, cb.centroids)
        assert back.k == cb.k
        assert back.seed == cb.seed
        assert back.offset_scale == cb.offset_scale
        assert back.lift_fraction == pytest.approx(cb.lift_fraction)

    def test_resave_bit_exact(self, cb, tmp_path):
        p1, p2 = tmp_path / "a.skcb", tmp_path / "b.skcb"
        save_codebook(p1, cb)
        save_codebook(p2, load_codebook(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_trace_not_persisted(self, rng, tmp_path):
        items = TestFitCodebook().corpus(rng)
        cb = fit_codebook(items, k=4, sample_size=200)
        assert cb.objective_trace
        path = tmp_path / "cb.skcb"
        save_codebook(path, cb)
        assert load_codebook(path).objective_trace == ()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.skcb"
        path.write_bytes(b"WRONG" + b"\x00" * 40)
        with pytest.raises(CodebookError, match="SKCB1"):
            load_codebook(path)

    def test_truncated(self, cb, tmp_path):
        path = tmp_path / "cut.skcb"
        save_codebook(path, cb)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CodebookError, match="expected"):
            load_codebook(path)
