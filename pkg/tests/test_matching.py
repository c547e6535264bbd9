"""Feature bank, cost volumes, aggregation, probability regression."""

import logging

import numpy as np
import pytest
from scipy.special import softmax as scipy_softmax

from pyramvs.errors import InputError
from pyramvs.geometry import WarpOperator
from pyramvs.matching import (
    CostVolume,
    aggregate,
    box_mean,
    build_cost_volume,
    extract_features,
    groupwise_correlation,
    hypothesis_plane,
    regress_depth,
    softmax_volume,
)


class TestBoxMean:
    def test_matches_naive_window_mean(self):
        rng = np.random.default_rng(0)
        values = rng.random((9, 11))
        radius = 2
        result = box_mean(values, radius)
        h, w = values.shape
        for y, x in [(0, 0), (4, 5), (8, 10), (0, 10), (3, 0)]:
            window = values[
                max(0, y - radius) : min(h, y + radius + 1),
                max(0, x - radius) : min(w, x + radius + 1),
            ]
            assert abs(result[y, x] - window.mean()) < 1e-10

    def test_constant_preserved(self):
        values = np.full((6, 6), 0.37)
        assert np.abs(box_mean(values, 2) - 0.37).max() < 1e-12


class TestExtractFeatures:
    def test_shapes_and_dtype(self):
        rng = np.random.default_rng(1)
        img = rng.random((24, 32))
        for channels in (4, 8, 16):
            features = extract_features(img, channels, groups=4)
            assert features.shape == (24, 32, channels)
            assert features.dtype == np.float32

    def test_channels_standardized(self):
        rng = np.random.default_rng(2)
        features = extract_features(rng.random((40, 40)), 8, groups=4)
        flat = features.reshape(-1, 8).astype(np.float64)
        assert np.abs(flat.mean(axis=0)).max() < 1e-5
        assert np.abs(flat.std(axis=0) - 1.0).max() < 1e-3

    def test_unsupported_channel_count_rejected(self):
        with pytest.raises(InputError):
            extract_features(np.zeros((16, 16)), 5, groups=1)

    def test_groups_must_divide_channels(self):
        with pytest.raises(InputError):
            extract_features(np.zeros((16, 16)), 8, groups=3)

    def test_tiny_image_rejected(self):
        with pytest.raises(InputError):
            extract_features(np.zeros((4, 16)), 8, groups=4)


class TestGroupwiseCorrelation:
    def test_matches_naive_loop(self):
        rng = np.random.default_rng(3)
        c, g = 8, 4
        ref = rng.standard_normal(c)
        src = rng.standard_normal(c)
        result = groupwise_correlation(ref, src, g)
        assert result.shape == (g,)
        per = c // g
        for gi in range(g):
            sl = slice(gi * per, (gi + 1) * per)
            oracle = (g / c) * (ref[sl] * src[sl]).sum()
            assert abs(result[gi] - oracle) < 1e-12

    def test_single_group_is_scaled_dot(self):
        ref = np.array([1.0, 2.0, 3.0, 4.0])
        src = np.array([4.0, 3.0, 2.0, 1.0])
        result = groupwise_correlation(ref, src, 1)
        assert abs(result[0] - (1 / 4) * 20.0) < 1e-12

    def test_self_correlation_positive(self):
        rng = np.random.default_rng(4)
        ref = rng.standard_normal(8)
        assert (groupwise_correlation(ref, ref, 4) >= 0).all()

    def test_rejects_maps_and_bad_groups(self):
        with pytest.raises(InputError):
            groupwise_correlation(np.zeros((4, 4, 8)), np.zeros((4, 4, 8)), 4)
        with pytest.raises(InputError):
            groupwise_correlation(np.zeros(8), np.zeros(8), 3)


def _identity_source(features, camera):
    op = WarpOperator.between(camera, camera)
    return (features, op)


class TestBuildCostVolume:
    def test_identity_source_equals_self_correlation(self, identity_camera):
        rng = np.random.default_rng(5)
        features = extract_features(rng.random((16, 16)), 8, groups=4)
        depths = np.linspace(5.0, 50.0, 4)
        volume = build_cost_volume(
            features, [_identity_source(features, identity_camera)], depths, groups=4
        )
        assert volume.data.shape == (16, 16, 4, 4)
        assert volume.mask.all()
        grouped = features.astype(np.float64).reshape(16, 16, 4, 2)
        oracle = (grouped * grouped).sum(axis=3) * (4 / 8)
        for j in range(4):
            assert np.abs(volume.data[:, :, j, :] - oracle).max() < 1e-5

    def test_two_identical_sources_average_to_one(self, identity_camera):
        rng = np.random.default_rng(6)
        features = extract_features(rng.random((16, 16)), 8, groups=4)
        depths = np.linspace(5.0, 50.0, 3)
        one = build_cost_volume(
            features, [_identity_source(features, identity_camera)], depths, groups=4
        )
        two = build_cost_volume(
            features,
            [_identity_source(features, identity_camera)] * 2,
            depths,
            groups=4,
        )
        assert np.abs(one.data - two.data).max() < 1e-6

    def test_out_of_view_masked_and_warned(self, make_camera, caplog):
        rng = np.random.default_rng(7)
        features = extract_features(rng.random((16, 16)), 8, groups=4)
        far_away = make_camera(center=(1e5, 0.0, 0.0))
        op = WarpOperator.between(make_camera(), far_away)
        depths = np.linspace(5.0, 50.0, 3)
        with caplog.at_level(logging.WARNING, logger="pyramvs.matching"):
            volume = build_cost_volume(features, [(features, op)], depths, groups=4)
        assert not volume.mask.any()
        assert (volume.data == 0).all()
        assert any("invalid" in record.message for record in caplog.records)

    def test_per_pixel_depths_must_match_grid(self, identity_camera):
        features = extract_features(np.zeros((16, 16)), 8, groups=4)
        bad = np.full((8, 8, 4), 10.0)
        with pytest.raises(InputError):
            build_cost_volume(
                features, [_identity_source(features, identity_camera)], bad, groups=4
            )
        with pytest.raises(InputError):
            build_cost_volume(
                features,
                [_identity_source(features, identity_camera)],
                np.full((16, 16), 10.0),
                groups=4,
            )


class TestAggregate:
    @staticmethod
    def _naive(volume, radius):
        h, w, d, _ = volume.data.shape
        pooled = volume.data.astype(np.float64).mean(axis=3)
        out = np.zeros((h, w, d))
        for j in range(d):
            for y in range(h):
                for x in range(w):
                    if not volume.mask[y, x, j]:
                        continue
                    ys = slice(max(0, y - radius), min(h, y + radius + 1))
                    xs = slice(max(0, x - radius), min(w, x + radius + 1))
                    weights = volume.mask[ys, xs, j].astype(np.float64)
                    out[y, x, j] = (pooled[ys, xs, j] * weights).sum() / weights.sum()
        return out

    def test_matches_naive_masked_filter(self):
        rng = np.random.default_rng(8)
        data = rng.standard_normal((7, 8, 3, 4)).astype(np.float32)
        mask = (rng.random((7, 8, 3)) > 0.3).astype(np.int16)
        depths = np.linspace(1.0, 3.0, 3)
        volume = CostVolume(data, mask, depths)
        result = aggregate(volume, radius=2)
        assert result.data.shape == (7, 8, 3, 1)
        oracle = self._naive(volume, 2)
        valid = mask.astype(bool)
        assert np.abs(result.data[..., 0][valid] - oracle[valid]).max() < 1e-5
        assert (result.data[..., 0][~valid] == 0).all()

    def test_mask_carried_over(self):
        data = np.ones((5, 5, 2, 2), dtype=np.float32)
        mask = np.ones((5, 5, 2), dtype=np.int16)
        mask[2, 2, 0] = 0
        volume = CostVolume(data, mask, np.array([1.0, 2.0]))
        result = aggregate(volume, radius=1)
        assert np.array_equal(result.mask, mask)


class TestSoftmaxVolume:
    def test_matches_scipy_on_valid_volume(self):
        rng = np.random.default_rng(9)
        data = rng.standard_normal((4, 5, 6, 1)).astype(np.float32)
        mask = np.ones((4, 5, 6), dtype=np.int16)
        volume = CostVolume(data, mask, np.linspace(1.0, 6.0, 6))
        sharpness = 20.0
        pv = softmax_volume(volume, sharpness)
        oracle = scipy_softmax(sharpness * data[..., 0].astype(np.float64), axis=2)
        assert pv.valid.all()
        assert np.abs(pv.probs.astype(np.float64) - oracle).max() < 1e-6
        sums = pv.probs.sum(axis=2)
        assert np.abs(sums - 1.0).max() < 1e-5

    def test_masked_lanes_zero(self):
        data = np.zeros((1, 1, 4, 1), dtype=np.float32)
        mask = np.array([1, 0, 1, 0], dtype=np.int16).reshape(1, 1, 4)
        volume = CostVolume(data, mask, np.linspace(1.0, 4.0, 4))
        pv = softmax_volume(volume, 1.0)
        assert pv.probs[0, 0, 1] == 0 and pv.probs[0, 0, 3] == 0
        assert abs(pv.probs[0, 0].sum() - 1.0) < 1e-6

    def test_fully_masked_pixel_uniform_and_invalid(self):
        data = np.zeros((1, 2, 3, 1), dtype=np.float32)
        mask = np.zeros((1, 2, 3), dtype=np.int16)
        mask[0, 0] = 1
        volume = CostVolume(data, mask, np.linspace(1.0, 3.0, 3))
        pv = softmax_volume(volume, 5.0)
        assert pv.valid[0, 0] and not pv.valid[0, 1]
        assert np.abs(pv.probs[0, 1] - 1.0 / 3.0).max() < 1e-6


class TestRegressDepth:
    def test_soft_argmax_oracle(self):
        rng = np.random.default_rng(10)
        data = rng.standard_normal((3, 4, 5, 1)).astype(np.float32)
        mask = np.ones((3, 4, 5), dtype=np.int16)
        depths = np.linspace(10.0, 50.0, 5)
        pv = softmax_volume(CostVolume(data, mask, depths), 3.0)
        depth_map, confidence = regress_depth(pv)
        oracle = (pv.probs.astype(np.float64) * depths).sum(axis=2)
        assert depth_map.dtype == np.float64
        assert np.abs(depth_map - oracle).max() < 1e-9
        assert np.abs(confidence - pv.probs.max(axis=2)).max() < 1e-9

    def test_one_hot_recovers_hypothesis(self):
        data = np.zeros((1, 1, 4, 1), dtype=np.float32)
        data[0, 0, 2, 0] = 100.0
        mask = np.ones((1, 1, 4), dtype=np.int16)
        depths = np.array([1.0, 2.0, 3.0, 4.0])
        pv = softmax_volume(CostVolume(data, mask, depths), 10.0)
        depth_map, confidence = regress_depth(pv)
        assert abs(depth_map[0, 0] - 3.0) < 1e-6
        assert confidence[0, 0] > 0.999


class TestHypothesisPlane:
    def test_shared_depths_broadcast(self):
        plane = hypothesis_plane(np.array([1.0, 2.0, 3.0]), 1, (4, 5))
        assert plane.shape == (4, 5)
        assert (plane == 2.0).all()

    def test_per_pixel_passthrough(self):
        depths = np.arange(24.0).reshape(2, 3, 4)
        plane = hypothesis_plane(depths, 3, (2, 3))
        assert np.array_equal(plane, depths[:, :, 3])
