"""Grayscale conversion, downsampling, pyramid construction."""

import numpy as np
import pytest

from pyramvs.errors import InputError
from pyramvs.image import build_pyramid, crop_to_multiple, downsample_2x, to_grayscale


class TestToGrayscale:
    def test_luma_coefficients(self):
        rgb = np.zeros((1, 3, 3))
        rgb[0, 0] = [1.0, 0.0, 0.0]
        rgb[0, 1] = [0.0, 1.0, 0.0]
        rgb[0, 2] = [0.0, 0.0, 1.0]
        gray = to_grayscale(rgb)
        assert np.allclose(gray[0], [0.299, 0.587, 0.114])

    def test_gray_passthrough(self):
        rng = np.random.default_rng(0)
        gray = rng.random((5, 6))
        assert np.array_equal(to_grayscale(gray), gray)


class TestCropDownsample:
    def test_crop_keeps_top_left(self):
        grid = np.arange(35.0).reshape(5, 7)
        cropped = crop_to_multiple(grid, 4)
        assert cropped.shape == (4, 4)
        assert np.array_equal(cropped, grid[:4, :4])

    def test_downsample_is_block_mean(self):
        rng = np.random.default_rng(1)
        img = rng.random((6, 8))
        down = downsample_2x(img)
        assert down.shape == (3, 4)
        oracle = img.reshape(3, 2, 4, 2).mean(axis=(1, 3))
        assert np.abs(down - oracle).max() < 1e-12


class TestBuildPyramid:
    def test_levels_and_shapes(self, identity_camera):
        rng = np.random.default_rng(2)
        img = rng.random((96, 128))
        pyramid = build_pyramid(img, identity_camera, 3)
        assert [level.shape for level in pyramid] == [(24, 32), (48, 64), (96, 128)]

    def test_intrinsics_halve_per_level(self, identity_camera):
        img = np.random.default_rng(3).random((64, 64))
        pyramid = build_pyramid(img, identity_camera, 3)
        fx = [level.camera.intrinsics[0, 0] for level in pyramid]
        assert fx == [25.0, 50.0, 100.0]
        assert pyramid[-1].camera.intrinsics[0, 0] == identity_camera.intrinsics[0, 0]

    def test_crop_to_power_of_two_multiple(self, identity_camera):
        img = np.random.default_rng(4).random((50, 67))
        pyramid = build_pyramid(img, identity_camera, 3)
        assert pyramid[-1].shape == (48, 64)

    def test_coarsest_level_is_block_mean_chain(self, identity_camera):
        img = np.random.default_rng(5).random((32, 32))
        pyramid = build_pyramid(img, identity_camera, 2)
        oracle = img.reshape(16, 2, 16, 2).mean(axis=(1, 3))
        assert np.abs(pyramid[0].pixels - oracle).max() < 1e-12

    def test_too_few_levels_rejected(self, identity_camera):
        with pytest.raises(InputError):
            build_pyramid(np.zeros((32, 32)), identity_camera, 1)

    def test_too_small_coarsest_side_rejected(self, identity_camera):
        with pytest.raises(InputError):
            build_pyramid(np.zeros((16, 16)), identity_camera, 3)

    def test_out_of_range_values_rejected(self, identity_camera):
        with pytest.raises(InputError):
            build_pyramid(np.full((32, 32), 1.5), identity_camera, 2)

    def test_rgb_input_converted(self, identity_camera):
        rgb = np.random.default_rng(6).random((32, 32, 3))
        pyramid = build_pyramid(rgb, identity_camera, 2)
        assert pyramid[-1].pixels.ndim == 2
        assert np.abs(pyramid[-1].pixels - to_grayscale(rgb)).max() < 1e-12
