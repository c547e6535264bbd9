"""Reference distributions, adaptive filtering, and the loss suite."""

import numpy as np
import pytest

from pyramvs.errors import InputError
from pyramvs.matching import ProbabilityVolume
from pyramvs.sampling import pixel_variance
from pyramvs.unimodal import (
    LossBreakdown,
    UnimodalParams,
    auf_filter,
    confidence_loss,
    reference_unimodal,
    regression_loss,
    sigma_from_confidence,
    stereo_focal_loss,
    total_loss,
)


def _fd(func, arr, step=1e-6):
    grad = np.zeros_like(arr, dtype=np.float64)
    flat_arr = arr.reshape(-1)
    flat_grad = grad.reshape(-1)
    for k in range(flat_arr.size):
        saved = flat_arr[k]
        flat_arr[k] = saved + step
        up = func(arr)
        flat_arr[k] = saved - step
        down = func(arr)
        flat_arr[k] = saved
        flat_grad[k] = (up - down) / (2 * step)
    return grad


class TestReferenceUnimodal:
    def test_hand_computed_triple(self):
        # Integer hypotheses 0..2 centered on 1 with unit sigma score
        # (-1, 0, -1); their softmax is the pinned triple.
        probs = reference_unimodal(np.array([0.0, 1.0, 2.0]), 1.0, 1.0)
        assert np.abs(probs - np.array([0.21194, 0.57612, 0.21194])).max() < 1e-5

    def test_tiny_sigma_approaches_one_hot(self):
        probs = reference_unimodal(np.array([0.0, 1.0, 2.0, 3.0]), 2.0, 1e-3)
        assert probs[2] > 1.0 - 1e-9
        assert probs[[0, 1, 3]].max() < 1e-9

    def test_huge_sigma_approaches_uniform(self):
        probs = reference_unimodal(np.array([0.0, 1.0, 2.0, 3.0]), 2.0, 1e9)
        assert np.abs(probs - 0.25).max() < 1e-6

    def test_rows_normalized_and_peaked(self):
        rng = np.random.default_rng(21)
        depths = np.linspace(10.0, 50.0, 9)
        center = rng.uniform(10.0, 50.0, (4, 5))
        sigma = rng.uniform(0.5, 8.0, (4, 5))
        probs = reference_unimodal(depths, center, sigma)
        assert probs.shape == (4, 5, 9)
        assert np.abs(probs.sum(axis=2) - 1.0).max() < 1e-12
        nearest = np.abs(depths[None, None, :] - center[:, :, None]).argmin(axis=2)
        assert (probs.argmax(axis=2) == nearest).all()

    def test_sigma_must_be_positive(self):
        with pytest.raises(InputError):
            reference_unimodal(np.array([0.0, 1.0]), 0.5, 0.0)


class TestSigmaFromConfidence:
    def test_linear_in_confidence(self):
        params = UnimodalParams()
        assert abs(float(sigma_from_confidence(0.5, params)) - 15.5) < 1e-12
        assert abs(float(sigma_from_confidence(1.0, params)) - 9.0) < 1e-12
        assert abs(float(sigma_from_confidence(0.0, params)) - 22.0) < 1e-12

    def test_params_validated(self):
        with pytest.raises(InputError):
            UnimodalParams(beta_conf=0.0)
        with pytest.raises(InputError):
            UnimodalParams(gamma=-0.1)


class TestStereoFocalLoss:
    def test_gamma_zero_is_cross_entropy(self):
        rng = np.random.default_rng(22)
        for _ in range(20):
            num_d = int(rng.integers(2, 9))
            rows = int(rng.integers(1, 5))
            ref = rng.dirichlet(np.ones(num_d), size=rows)
            logits = rng.normal(0.0, 2.0, (rows, num_d))
            loss, _ = stereo_focal_loss(ref, logits, 0.0)
            shifted = logits - logits.max(axis=1, keepdims=True)
            log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            ce = float(-(ref * log_p).sum() / rows)
            assert abs(loss - ce) < 1e-9

    def test_one_hot_uniform_prediction(self):
        loss, _ = stereo_focal_loss(np.array([1.0, 0.0]), np.zeros(2), 0.0)
        assert abs(loss + np.log(0.5)) < 1e-12

    @pytest.mark.parametrize("conventional", [False, True])
    def test_gradient_matches_finite_differences(self, conventional):
        rng = np.random.default_rng(23)
        worst = 0.0
        for _ in range(10):
            num_d = int(rng.integers(2, 7))
            rows = int(rng.integers(1, 4))
            ref = rng.dirichlet(np.ones(num_d), size=rows)
            logits = rng.normal(0.0, 2.0, (rows, num_d))
            gamma = float(rng.uniform(0.0, 3.0))
            _, grad = stereo_focal_loss(ref, logits, gamma, conventional)
            fd = _fd(lambda lg: stereo_focal_loss(ref, lg, gamma, conventional)[0], logits.copy())
            denom = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-8)
            worst = max(worst, float((np.abs(grad - fd) / denom).max()))
        assert worst < 1e-5

    def test_gradient_rows_sum_to_zero(self):
        # Softmax is shift invariant, so the loss cannot change under a
        # constant logit offset and the gradient must be orthogonal to it.
        rng = np.random.default_rng(24)
        ref = rng.dirichlet(np.ones(6), size=3)
        logits = rng.normal(0.0, 1.0, (3, 6))
        for gamma, conventional in [(0.0, False), (2.0, False), (2.0, True)]:
            _, grad = stereo_focal_loss(ref, logits, gamma, conventional)
            assert np.abs(grad.sum(axis=1)).max() < 1e-12

    def test_printed_weight_upper_bounds_conventional(self):
        # (1 - P)^(-gamma) >= 1 >= (1 - P)^(+gamma) per term, so the printed
        # form can only increase the cross-entropy and the conventional form
        # can only decrease it.
        rng = np.random.default_rng(25)
        ref = rng.dirichlet(np.ones(5), size=4)
        logits = rng.normal(0.0, 2.0, (4, 5))
        printed, _ = stereo_focal_loss(ref, logits, 1.5, conventional=False)
        plain, _ = stereo_focal_loss(ref, logits, 0.0)
        conventional, _ = stereo_focal_loss(ref, logits, 1.5, conventional=True)
        assert printed >= plain >= conventional

    def test_validation(self):
        with pytest.raises(InputError):
            stereo_focal_loss(np.ones((2, 3)), np.ones((2, 4)), 0.0)
        with pytest.raises(InputError):
            stereo_focal_loss(np.ones(3) / 3, np.zeros(3), -1.0)


class TestConfidenceLoss:
    def test_fully_confident_is_zero(self):
        assert confidence_loss(np.ones((4, 4))) == 0.0

    def test_known_value(self):
        f = np.array([np.exp(-1.0), np.exp(-2.0)])
        assert abs(confidence_loss(f) - 1.5) < 1e-12

    def test_nonpositive_rejected(self):
        with pytest.raises(InputError):
            confidence_loss(np.array([0.5, 0.0]))


class TestRegressionLoss:
    def test_matches_naive_sum_and_mean(self):
        rng = np.random.default_rng(26)
        dm = rng.uniform(400.0, 1100.0, (6, 7))
        gt = rng.uniform(400.0, 1100.0, (6, 7))
        mask = rng.random((6, 7)) > 0.3
        naive = sum(
            abs(float(dm[y, x]) - float(gt[y, x]))
            for y in range(6)
            for x in range(7)
            if mask[y, x]
        )
        assert abs(regression_loss(dm, gt, mask) - naive) < 1e-9
        assert abs(regression_loss(dm, gt, mask, "mean") - naive / mask.sum()) < 1e-9

    def test_empty_mask_rejected(self):
        with pytest.raises(InputError):
            regression_loss(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), dtype=bool))

    def test_shape_and_reduction_validated(self):
        with pytest.raises(InputError):
            regression_loss(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2), dtype=bool))
        with pytest.raises(InputError):
            regression_loss(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 2), dtype=bool), "max")


class TestTotalLoss:
    def test_worked_example(self):
        result = total_loss(1.0, 1.0, (1.0, 1.0, 1.0))
        assert abs(result.total - 93.5) < 1e-9
        assert isinstance(result, LossBreakdown)

    def test_linearity_in_each_part(self):
        base = total_loss(0.3, 0.2, (0.1, 0.4, 0.7)).total
        assert abs(total_loss(0.3 + 1.0, 0.2, (0.1, 0.4, 0.7)).total - base - 10.0) < 1e-9
        assert abs(total_loss(0.3, 0.2 + 1.0, (0.1, 0.4, 0.7)).total - base - 80.0) < 1e-9
        assert abs(total_loss(0.3, 0.2, (0.1 + 1.0, 0.4, 0.7)).total - base - 0.5) < 1e-9
        assert abs(total_loss(0.3, 0.2, (0.1, 0.4 + 1.0, 0.7)).total - base - 1.0) < 1e-9
        assert abs(total_loss(0.3, 0.2, (0.1, 0.4, 0.7 + 1.0)).total - base - 2.0) < 1e-9

    def test_extra_stages_repeat_last_weight(self):
        result = total_loss(0.0, 0.0, (1.0, 1.0, 1.0, 1.0, 1.0))
        assert abs(result.total - (0.5 + 1.0 + 2.0 + 2.0 + 2.0)) < 1e-12

    def test_breakdown_recombines(self):
        result = total_loss(0.7, 0.9, (0.2, 0.3), lambda_sf=3.0, lambda_conf=5.0)
        recombined = 3.0 * result.stereo_focal + 5.0 * result.confidence
        recombined += 0.5 * result.regression[0] + 1.0 * result.regression[1]
        assert abs(result.total - recombined) < 1e-12


def _volume_from_probs(probs, depths, valid=None):
    probs = np.asarray(probs, dtype=np.float32)
    if valid is None:
        valid = np.ones(probs.shape[:2], dtype=bool)
    return ProbabilityVolume(probs, np.asarray(depths, dtype=np.float64), valid)


class TestAufFilter:
    def test_argmax_preserved_and_variance_reduced(self):
        rng = np.random.default_rng(27)
        h, w, num_d = 8, 8, 32
        depths = np.linspace(425.0, 1065.0, num_d)
        raw = rng.random((h, w, num_d)) ** 2
        probs = raw / raw.sum(axis=2, keepdims=True)
        pv = _volume_from_probs(probs, depths)
        confidence = probs.max(axis=2)
        filtered = auf_filter(pv, confidence, UnimodalParams())
        assert (filtered.probs.argmax(axis=2) == pv.probs.argmax(axis=2)).all()
        assert np.abs(filtered.probs.sum(axis=2) - 1.0).max() < 1e-5
        dm = filtered.probs.astype(np.float64) @ depths
        dm0 = pv.probs.astype(np.float64) @ depths
        var_after = pixel_variance(filtered, dm)
        var_before = pixel_variance(pv, dm0)
        assert (var_after <= var_before + 1e-9).all()

    def test_one_hot_rows_unchanged(self):
        num_d = 16
        depths = np.linspace(1.0, 16.0, num_d)
        probs = np.zeros((2, 2, num_d))
        probs[:, :, 5] = 1.0
        pv = _volume_from_probs(probs, depths)
        filtered = auf_filter(pv, np.ones((2, 2)), UnimodalParams())
        assert np.abs(filtered.probs - pv.probs).max() < 1e-7

    def test_secondary_mode_suppressed(self):
        # Two modes at opposite ends; after filtering, the mass ratio between
        # the far mode and the argmax mode must drop.
        num_d = 48
        depths = np.linspace(425.0, 1065.0, num_d)
        probs = np.full((1, 1, num_d), 1e-4)
        probs[0, 0, 10] = 0.6
        probs[0, 0, 40] = 0.4
        probs /= probs.sum()
        pv = _volume_from_probs(probs, depths)
        filtered = auf_filter(pv, np.array([[0.6]]), UnimodalParams())
        before = probs[0, 0, 40] / probs[0, 0, 10]
        after = float(filtered.probs[0, 0, 40]) / float(filtered.probs[0, 0, 10])
        assert after < before
        assert filtered.probs[0, 0].argmax() == 10

    def test_invalid_rows_pass_through(self):
        num_d = 8
        depths = np.linspace(1.0, 8.0, num_d)
        probs = np.full((2, 2, num_d), 1.0 / num_d)
        valid = np.array([[True, False], [False, True]])
        pv = _volume_from_probs(probs, depths, valid)
        filtered = auf_filter(pv, np.full((2, 2), 0.5), UnimodalParams())
        assert np.abs(filtered.probs[0, 1] - 1.0 / num_d).max() == 0.0
        assert np.abs(filtered.probs[1, 0] - 1.0 / num_d).max() == 0.0

    def test_per_pixel_depths_supported(self):
        rng = np.random.default_rng(28)
        h, w, num_d = 3, 3, 16
        depths = np.sort(rng.uniform(400.0, 1100.0, (h, w, num_d)), axis=2)
        raw = rng.random((h, w, num_d))
        probs = raw / raw.sum(axis=2, keepdims=True)
        pv = _volume_from_probs(probs, depths)
        filtered = auf_filter(pv, probs.max(axis=2), UnimodalParams())
        assert (filtered.probs.argmax(axis=2) == pv.probs.argmax(axis=2)).all()
        assert np.abs(filtered.probs.sum(axis=2) - 1.0).max() < 1e-5
