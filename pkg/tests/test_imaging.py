"""Raster primitives: kernels, convolution, warps, noise, resize, file I/O."""

import numpy as np
import pytest

from prism_forge.fileio import read_png, read_pnm, write_png, write_pnm
from prism_forge.imaging import (
    clamp01,
    convolve2d,
    gaussian_kernel,
    perlin_noise,
    resize,
    resize_to,
    warp,
)
from prism_forge.rng import child_rng, child_seed, make_rng


class TestGaussianKernel:
    def test_size_one_is_identity(self):
        assert gaussian_kernel(1.0, 1).tolist() == [[1.0]]

    def test_large_sigma_approaches_uniform(self):
        k = gaussian_kernel(1e6, 3)
        assert np.allclose(k, 1.0 / 9.0, atol=1e-9)

    def test_matches_hand_evaluated_gaussian(self):
        # independent evaluation of exp(-r^2 / 2 sigma^2) at each tap
        sigma, size = 0.5, 3
        raw = np.empty((3, 3))
        for y in range(3):
            for x in range(3):
                r2 = (y - 1) ** 2 + (x - 1) ** 2
                raw[y, x] = np.exp(-r2 / (2 * sigma**2))
        expected = raw / raw.sum()
        assert np.allclose(gaussian_kernel(sigma, size), expected, atol=1e-15)

    @pytest.mark.parametrize("sigma,size", [(1.0, 3), (2.5, 7), (0.7, 11)])
    def test_normalized_and_symmetric(self, sigma, size):
        k = gaussian_kernel(sigma, size)
        assert abs(k.sum() - 1.0) <= 1e-12
        assert np.allclose(k, np.rot90(k, 2))

    @pytest.mark.parametrize("sigma,size", [(0.0, 3), (-1.0, 3), (1.0, 4), (1.0, 0)])
    def test_rejects_bad_arguments(self, sigma, size):
        with pytest.raises(ValueError):
            gaussian_kernel(sigma, size)


class TestConvolve2d:
    def test_identity_kernel(self):
        img = make_rng(0).random((9, 7))
        assert np.array_equal(convolve2d(img, np.array([[1.0]])), img)

    def test_constant_image_preserved_by_normalized_kernel(self):
        img = np.full((8, 8, 3), 0.5)
        out = convolve2d(img, gaussian_kernel(1.3, 5))
        assert np.allclose(out, 0.5, atol=1e-12)

    def test_impulse_replicates_box_kernel(self):
        img = np.zeros((3, 3))
        img[1, 1] = 1.0
        box = np.full((3, 3), 1.0 / 9.0)
        out = convolve2d(img, box)
        assert np.allclose(out, box[::-1, ::-1], atol=1e-15)  # correlation of impulse

    def test_rejects_even_kernel(self):
        with pytest.raises(ValueError):
            convolve2d(np.zeros((4, 4)), np.ones((2, 2)))

    def test_rejects_empty_image(self):
        with pytest.raises(ValueError):
            convolve2d(np.zeros((0, 4)), np.array([[1.0]]))


class TestWarp:
    def test_zero_field_is_identity(self):
        img = make_rng(1).random((6, 5, 3))
        z = np.zeros((6, 5))
        assert np.array_equal(warp(img, z, z), img)

    def test_integer_shift_with_edge_clamp(self):
        img = make_rng(2).random((4, 6))
        dx = np.ones((4, 6))
        dy = np.zeros((4, 6))
        out = warp(img, dx, dy)
        # out(x) samples in(x+1); last column clamps to the edge
        assert np.allclose(out[:, :-1], img[:, 1:], atol=1e-12)
        assert np.allclose(out[:, -1], img[:, -1], atol=1e-12)

    def test_half_pixel_shift_interpolates_midpoints(self):
        ramp = np.tile(np.arange(8, dtype=float) / 10.0, (4, 1))
        dx = np.full((4, 8), 0.5)
        dy = np.zeros((4, 8))
        out = warp(ramp, dx, dy)
        expected = (ramp[:, :-1] + ramp[:, 1:]) / 2.0
        assert np.allclose(out[:, :-1], expected, atol=1e-12)

    def test_rejects_mismatched_field(self):
        with pytest.raises(ValueError):
            warp(np.zeros((4, 4)), np.zeros((3, 3)), np.zeros((3, 3)))


class TestPerlinNoise:
    def test_deterministic_for_fixed_seed(self):
        a = perlin_noise(32, 40, 8.0, make_rng(7))
        b = perlin_noise(32, 40, 8.0, make_rng(7))
        assert np.array_equal(a, b)

    def test_range_and_smoothness(self):
        field = perlin_noise(64, 64, 16.0, make_rng(3))
        assert field.min() >= 0.0 and field.max() <= 1.0
        delta = max(np.abs(np.diff(field, axis=0)).max(), np.abs(np.diff(field, axis=1)).max())
        assert delta <= 4.0 / 16.0

    def test_single_cell_is_near_constant(self):
        field = perlin_noise(32, 32, 32.0, make_rng(5))
        assert field.std() < 0.25

    def test_histogram_spread(self):
        # frozen against this implementation's reference run
        field = perlin_noise(256, 256, 16.0, make_rng(42))
        hist, _ = np.histogram(field, bins=10, range=(0, 1))
        assert (hist > 0).sum() >= 8

    def test_rejects_zero_dims_and_small_scale(self):
        with pytest.raises(ValueError):
            perlin_noise(0, 4, 2.0, make_rng(0))
        with pytest.raises(ValueError):
            perlin_noise(4, 4, 0.5, make_rng(0))


def _keys_weight(t: float, a: float = -0.5) -> float:
    t = abs(t)
    if t <= 1:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1
    if t < 2:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


class TestResize:
    def test_factor_one_is_identity(self):
        img = make_rng(11).random((10, 12, 3))
        assert np.array_equal(resize(img, 1.0), img)

    def test_constant_down_up_exact(self):
        img = np.full((8, 8), 0.37)
        out = resize(resize(img, 0.5), 2.0)
        assert out.shape == (8, 8)
        assert np.allclose(out, 0.37, atol=1e-12)

    def test_downsample_matches_hand_evaluated_kernel(self):
        # independent oracle: direct Keys-kernel evaluation with edge clamping
        ramp = np.linspace(0.1, 0.9, 4)
        img = np.tile(ramp, (4, 1))
        out = resize(img, 0.5)
        expected_row = []
        for xd in range(2):
            src = (xd + 0.5) * 2.0 - 0.5
            base = int(np.floor(src))
            acc = 0.0
            for k in range(-1, 3):
                idx = min(max(base + k, 0), 3)
                acc += _keys_weight(src - (base + k)) * ramp[idx]
            expected_row.append(np.clip(acc, 0, 1))
        assert np.allclose(out[0], expected_row, atol=1e-12)
        assert np.allclose(out, np.tile(expected_row, (2, 1)), atol=1e-12)

    def test_rejects_collapsing_factor(self):
        with pytest.raises(ValueError):
            resize(np.zeros((4, 4)), 0.01)


class TestFileIO:
    def test_png_roundtrip_rgb(self, tmp_path):
        img = make_rng(4).random((9, 7, 3))
        path = tmp_path / "x.png"
        write_png(path, img)
        back = read_png(path)
        assert back.shape == img.shape
        assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-12

    def test_png_roundtrip_gray(self, tmp_path):
        img = make_rng(5).random((5, 6))
        path = tmp_path / "g.png"
        write_png(path, img)
        back = read_png(path)
        assert back.shape == (5, 6)
        assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-12

    def test_pnm_roundtrip_both_formats(self, tmp_path):
        rgb = make_rng(6).random((4, 5, 3))
        gray = make_rng(7).random((4, 5))
        for name, img in (("c.ppm", rgb), ("g.pgm", gray)):
            path = tmp_path / name
            write_pnm(path, img)
            back = read_pnm(path)
            assert back.shape == img.shape
            assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-12

    def test_png_bytes_deterministic(self, tmp_path):
        img = make_rng(8).random((16, 16, 3))
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        write_png(p1, img)
        write_png(p2, img)
        assert p1.read_bytes() == p2.read_bytes()


class TestSeededRng:
    def test_same_seed_same_stream(self):
        assert make_rng(42).random(8).tolist() == make_rng(42).random(8).tolist()

    def test_child_streams_differ_per_item(self):
        a = child_rng(42, 2, 0).random(4)
        b = child_rng(42, 2, 1).random(4)
        assert not np.allclose(a, b)

    def test_child_seed_deterministic(self):
        assert child_seed(42, 1, 2) == child_seed(42, 1, 2)
        assert child_seed(42, 1, 2) != child_seed(42, 1, 3)


def test_clamp01_bounds():
    arr = np.array([-0.3, 0.0, 0.5, 1.0, 1.7])
    assert clamp01(arr).tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]
