"""Synthetic data: bicubic resampling, patch shuffling, augmentation."""

import numpy as np
import pytest

from frfsr.data import (SHUFFLE_GRID, SHUFFLE_LEVELS, augment_pair,
                        bicubic_downsample, bicubic_kernel, bicubic_upsample,
                        make_pair, shuffle_patches, synthetic_dataset)


def bicubic_downsample_scalar_oracle(img, factor):
    """Direct antialiased resampling of a single pixel row/column at a time."""
    def kernel(x, a=-0.5):
        ax = abs(x)
        if ax <= 1:
            return (a + 2) * ax ** 3 - (a + 3) * ax ** 2 + 1
        if ax < 2:
            return a * ax ** 3 - 5 * a * ax ** 2 + 8 * a * ax - 4 * a
        return 0.0

    def axis_weights(n_in):
        n_out = n_in // factor
        rows = []
        for o in range(n_out):
            center = (o + 0.5) * factor - 0.5
            idx = int(np.floor(center)) + np.arange(-2 * factor + 1, 2 * factor + 1)
            w = np.array([kernel((i - center) / factor) for i in idx])
            w /= w.sum()
            rows.append((np.clip(idx, 0, n_in - 1), w))
        return rows

    n, c, h, w = img.shape
    rows_h, rows_w = axis_weights(h), axis_weights(w)
    out = np.zeros((n, c, h // factor, w // factor))
    for b in range(n):
        for ch in range(c):
            tmp = np.array([wh @ img[b, ch, ih, :] for ih, wh in rows_h])
            out[b, ch] = np.array([[ww @ tmp[i, iw] for iw, ww in rows_w]
                                   for i in range(len(rows_h))])
    return np.clip(out, 0, 1)


class TestBicubic:
    def test_kernel_properties(self):
        assert bicubic_kernel(0.0) == 1.0
        assert bicubic_kernel(1.0) == 0.0
        assert bicubic_kernel(2.0) == 0.0
        assert bicubic_kernel(2.5) == 0.0

    def test_downsample_matches_scalar_oracle(self, rng):
        img = rng.uniform(size=(1, 2, 8, 8))
        out = bicubic_downsample(img, 4)
        ref = bicubic_downsample_scalar_oracle(img, 4)
        assert np.abs(out.data - ref).max() <= 1e-12

    def test_downsample_constant_image(self):
        img = np.full((1, 3, 16, 16), 0.6)
        out = bicubic_downsample(img, 4)
        assert np.allclose(out.data, 0.6, atol=1e-12)

    def test_downsample_indivisible_rejected(self, rng):
        with pytest.raises(ValueError):
            bicubic_downsample(rng.uniform(size=(1, 3, 10, 10)), 4)

    def test_upsample_constant_and_shape(self):
        img = np.full((1, 3, 4, 4), 0.25)
        up = bicubic_upsample(img, 4)
        assert up.shape == (1, 3, 16, 16)
        assert np.allclose(up.data, 0.25, atol=1e-12)

    def test_up_down_roundtrip_on_smooth_image(self):
        yy, xx = np.meshgrid(np.linspace(0, 1, 8), np.linspace(0, 1, 8), indexing="ij")
        img = (0.5 + 0.3 * np.sin(2 * np.pi * xx) * np.cos(np.pi * yy))[None, None]
        back = bicubic_downsample(bicubic_upsample(img, 4), 4)
        assert np.abs(back.data - img).max() <= 0.02


class TestShuffle:
    def test_levels_and_grids(self):
        assert tuple(SHUFFLE_LEVELS) == ("none", "easy", "medium", "hard")
        assert SHUFFLE_GRID["easy"] == 2
        assert SHUFFLE_GRID["medium"] == 4
        assert SHUFFLE_GRID["hard"] == 8

    @pytest.mark.parametrize("level", ["none", "easy", "medium", "hard"])
    def test_pixel_multiset_preserved(self, rng, level):
        img = rng.uniform(size=(1, 3, 16, 16))
        out = shuffle_patches(img, level, rng)
        assert np.array_equal(np.sort(out.data.ravel()), np.sort(img.ravel()))

    def test_none_level_is_identity(self, rng):
        img = rng.uniform(size=(1, 3, 8, 8))
        assert np.array_equal(shuffle_patches(img, "none", rng).data, img)

    def test_shuffle_moves_whole_patches(self, rng):
        img = rng.uniform(size=(1, 1, 8, 8))
        out = shuffle_patches(img, "easy", np.random.default_rng(1)).data
        blocks_in = {img[0, 0, i:i + 4, j:j + 4].tobytes()
                     for i in (0, 4) for j in (0, 4)}
        blocks_out = {out[0, 0, i:i + 4, j:j + 4].tobytes()
                      for i in (0, 4) for j in (0, 4)}
        assert blocks_in == blocks_out

    def test_unknown_level_rejected(self, rng):
        with pytest.raises(ValueError):
            shuffle_patches(np.zeros((1, 1, 8, 8)), "extreme", rng)

    def test_indivisible_size_rejected(self, rng):
        with pytest.raises(ValueError):
            shuffle_patches(np.zeros((1, 1, 9, 9)), "easy", rng)


class TestAugmentAndDataset:
    def test_augment_preserves_pixel_multisets(self, rng):
        hr = rng.uniform(size=(3, 8, 8))
        ref = rng.uniform(size=(3, 8, 8))
        hr2, ref2 = augment_pair(hr, ref, rng)
        assert np.array_equal(np.sort(hr2.ravel()), np.sort(hr.ravel()))
        assert np.array_equal(np.sort(ref2.ravel()), np.sort(ref.ravel()))

    def test_augment_is_seed_deterministic(self, rng):
        hr = rng.uniform(size=(3, 8, 8))
        ref = rng.uniform(size=(3, 8, 8))
        a = augment_pair(hr, ref, np.random.default_rng(3))
        b = augment_pair(hr, ref, np.random.default_rng(3))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_make_pair_shapes_and_range(self, rng):
        pair = make_pair(rng, 32)
        assert pair.hr.shape == (1, 3, 32, 32)
        assert pair.lr.shape == (1, 3, 8, 8)
        assert pair.ref.shape == (1, 3, 32, 32)
        for t in (pair.hr, pair.lr, pair.ref):
            assert t.data.min() >= 0 and t.data.max() <= 1

    def test_dataset_deterministic_given_seed(self):
        a = synthetic_dataset(3, 32, seed=9)
        b = synthetic_dataset(3, 32, seed=9)
        assert len(a) == 3
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.hr.data, pb.hr.data)
            assert np.array_equal(pa.ref.data, pb.ref.data)
