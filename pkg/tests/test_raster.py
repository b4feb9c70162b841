"""Rasterizer and Chamfer metric tests."""

import numpy as np
import pytest

from sketchembed.raster import RasterImage, chamfer_distance, rasterize
from sketchembed.sketch import Sketch


def horizontal_line() -> Sketch:
    return Sketch((np.array([[0.0, 10.0], [100.0, 10.0]]),))


class TestRasterImage:
    def test_rejects_out_of_range_intensities(self):
        with pytest.raises(ValueError):
            RasterImage(2, 2, np.array([[0.0, 0.5], [1.0, 1.5]]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            RasterImage(3, 2, np.zeros((3, 2)))  # (height, width) expected

    def test_pixels_read_only(self):
        img = RasterImage(2, 2, np.zeros((2, 2)))
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 1.0

    def test_ink_mask_threshold(self):
        img = RasterImage(2, 2, np.array([[0.0, 0.4], [0.6, 1.0]]))
        assert np.array_equal(img.ink_mask(), [[False, False], [True, True]])


class TestRasterize:
    def test_horizontal_line_lands_on_one_row(self):
        img = rasterize(horizontal_line(), side=32)
        ys, xs = np.nonzero(img.pixels)
        assert set(ys) == {16}  # degenerate bbox height centers on the canvas (rint 15.5 -> 16)
        # 5% margin each side of a 31-pixel span
        assert xs.min() == round(15.5 - 0.45 * 31)
        assert xs.max() == round(15.5 + 0.45 * 31)

    def test_values_binary(self):
        img = rasterize(horizontal_line(), side=32)
        assert set(np.unique(img.pixels)) <= {0.0, 1.0}

    def test_deterministic(self):
        a = rasterize(horizontal_line(), side=64, line_width=2)
        b = rasterize(horizontal_line(), side=64, line_width=2)
        assert np.array_equal(a.pixels, b.pixels)

    def test_translation_invariant(self):
        base = rasterize(horizontal_line(), side=32)
        moved = rasterize(horizontal_line().translated(40.0, -3.0), side=32)
        assert np.array_equal(base.pixels, moved.pixels)

    def test_wider_lines_cover_thin_ones(self):
        s = Sketch((np.array([[0.0, 0.0], [50.0, 30.0], [80.0, 5.0]]),))
        thin = rasterize(s, side=48, line_width=1).ink_mask()
        wide = rasterize(s, side=48, line_width=3).ink_mask()
        assert (wide & thin).sum() == thin.sum()
        assert wide.sum() > thin.sum()

    def test_single_point_is_center_dot(self):
        img = rasterize(Sketch((np.array([[42.0, 17.0]]),)), side=33)
        ys, xs = np.nonzero(img.pixels)
        assert (list(ys), list(xs)) == ([16], [16])

    def test_side_too_small(self):
        with pytest.raises(ValueError):
            rasterize(horizontal_line(), side=15)

    def test_line_width_too_small(self):
        with pytest.raises(ValueError):
            rasterize(horizontal_line(), line_width=0)


class TestChamfer:
    def test_identical_images_zero(self):
        img = rasterize(horizontal_line(), side=32)
        assert chamfer_distance(img, img) == 0.0

    def test_positive_on_disjoint_ink(self):
        top = np.zeros((16, 16))
        top[2, :] = 1.0
        bottom = np.zeros((16, 16))
        bottom[13, :] = 1.0
        d = chamfer_distance(RasterImage(16, 16, top), RasterImage(16, 16, bottom))
        assert d == pytest.approx(11.0)  # parallel rows 11 pixels apart

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        a = RasterImage(16, 16, (rng.random((16, 16)) > 0.8).astype(float))
        b = RasterImage(16, 16, (rng.random((16, 16)) > 0.8).astype(float))
        assert chamfer_distance(a, b) == chamfer_distance(b, a)

    def test_empty_vs_ink_sentinel(self):
        empty = RasterImage(16, 16, np.zeros((16, 16)))
        img = rasterize(horizontal_line(), side=16)
        assert chamfer_distance(empty, img) == pytest.approx(np.hypot(16, 16))
        assert chamfer_distance(empty, empty) == 0.0

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            chamfer_distance(
                RasterImage(16, 16, np.zeros((16, 16))),
                RasterImage(17, 17, np.zeros((17, 17))),
            )
