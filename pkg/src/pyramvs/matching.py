"""Hand-crafted grouped features and the plane-sweep matching path.

The learned parts of the usual pipeline are replaced by classical stand-ins:
an 8-filter feature bank instead of a trained extractor, and a masked box
filter instead of a 3D regularization network. Matching itself is group-wise
correlation over warped features, turned into a per-pixel depth distribution
by a sharpened softmax and read out with a soft argmax.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .errors import InputError
from .geometry import WarpOperator, bilinear_sample

logger = logging.getLogger(__name__)

FEATURE_CHANNEL_CHOICES = (4, 8, 16)
STD_FLOOR = 1e-6
_LOCAL_STAT_RADIUS = 2


def _box_sum(values: np.ndarray, radius: int) -> np.ndarray:
    """Sum of each (2r+1)-square window, windows clipped at the borders."""
    if radius == 0:
        return values.astype(np.float64)
    integral = np.cumsum(np.cumsum(values.astype(np.float64), axis=0), axis=1)
    integral = np.pad(integral, [(1, 0), (1, 0)] + [(0, 0)] * (values.ndim - 2))
    h, w = values.shape[:2]
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.maximum(ys - radius, 0)
    y1 = np.minimum(ys + radius, h - 1) + 1
    x0 = np.maximum(xs - radius, 0)
    x1 = np.minimum(xs + radius, w - 1) + 1
    return (
        integral[np.ix_(y1, x1)]
        - integral[np.ix_(y0, x1)]
        - integral[np.ix_(y1, x0)]
        + integral[np.ix_(y0, x0)]
    )


def box_mean(values: np.ndarray, radius: int) -> np.ndarray:
    """Border-aware box average with a (2r+1)-square window."""
    if radius == 0:
        return values.astype(np.float64)
    counts = _box_sum(np.ones(values.shape[:2]), radius)
    if values.ndim == 3:
        counts = counts[..., None]
    return _box_sum(values, radius) / counts


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Shift with edge replication, so gradients stay defined at the border."""
    padded = np.pad(img, 1, mode="edge")
    return padded[1 + dy : 1 + dy + img.shape[0], 1 + dx : 1 + dx + img.shape[1]]


def _channel_bank(gray: np.ndarray) -> np.ndarray:
    """The fixed 8-filter response stack for one grayscale image."""
    gx = (_shift(gray, 0, 1) - _shift(gray, 0, -1)) / 2.0
    gy = (_shift(gray, 1, 0) - _shift(gray, -1, 0)) / 2.0
    g45 = (_shift(gray, 1, 1) - _shift(gray, -1, -1)) / 2.0
    g135 = (_shift(gray, 1, -1) - _shift(gray, -1, 1)) / 2.0
    mean = box_mean(gray, _LOCAL_STAT_RADIUS)
    sq_mean = box_mean(gray * gray, _LOCAL_STAT_RADIUS)
    local_std = np.sqrt(np.maximum(sq_mean - mean * mean, 0.0))
    laplace = _shift(gray, 0, 1) + _shift(gray, 0, -1) + _shift(gray, 1, 0) + _shift(gray, -1, 0) - 4 * gray
    return np.stack(
        [gray, np.abs(gx), np.abs(gy), mean, local_std, np.abs(g45), np.abs(g135), laplace],
        axis=-1,
    )


def extract_features(pixels: np.ndarray, channels: int, groups: int) -> np.ndarray:
    """Compute a standardized multi-channel feature map from a grayscale image.

    The channel menu is intensity, |dx|, |dy|, local mean, local std, the two
    diagonal gradient magnitudes, and a Laplacian. channels=4 keeps the first
    four; channels=16 adds the same bank computed on a box-smoothed copy.
    Every channel is standardized to zero mean and unit variance over the
    image (std floored at 1e-6, so constant channels come out all zero).

    Args:
        pixels: (H, W) grayscale image.
        channels: 4, 8 or 16.
        groups: correlation group count; must divide channels.

    Returns:
        (H, W, channels) float32 feature map.
    """
    gray = np.asarray(pixels, dtype=np.float64)
    if gray.ndim != 2:
        raise InputError(f"expected a grayscale (H, W) image, got shape {gray.shape}")
    if channels not in FEATURE_CHANNEL_CHOICES:
        raise InputError(f"channels must be one of {FEATURE_CHANNEL_CHOICES}, got {channels}")
    if groups < 1 or channels % groups:
        raise InputError(f"groups ({groups}) must divide channels ({channels})")
    support = 2 * _LOCAL_STAT_RADIUS + 1
    if min(gray.shape) < support:
        raise InputError(f"image {gray.shape} is smaller than the {support}x{support} filter support")
    bank = _channel_bank(gray)
    if channels == 16:
        bank = np.concatenate([bank, _channel_bank(box_mean(gray, 1))], axis=-1)
    bank = bank[:, :, :channels]
    mean = bank.mean(axis=(0, 1))
    std = bank.std(axis=(0, 1))
    return ((bank - mean) / np.maximum(std, STD_FLOOR)).astype(np.float32)


def groupwise_correlation(ref_vec: np.ndarray, src_vec: np.ndarray, groups: int) -> np.ndarray:
    """Per-group scaled inner products of two equal-length feature vectors.

    For group g of size C/G the score is (G/C) * <ref_g, src_g>.
    """
    ref = np.asarray(ref_vec, dtype=np.float64)
    src = np.asarray(src_vec, dtype=np.float64)
    if ref.shape != src.shape or ref.ndim != 1:
        raise InputError(f"expected equal 1-D vectors, got {ref.shape} and {src.shape}")
    c = ref.shape[0]
    if groups < 1 or c % groups:
        raise InputError(f"groups ({groups}) must divide channels ({c})")
    per = c // groups
    return (ref.reshape(groups, per) * src.reshape(groups, per)).sum(axis=1) * (groups / c)


@dataclasses.dataclass(frozen=True)
class CostVolume:
    """Matching scores over depth hypotheses.

    Attributes:
        data: (H, W, D, G) float32 scores; zero wherever mask is zero.
        mask: (H, W, D) int16 count of source views that contributed.
        depths: (D,) shared or (H, W, D) per-pixel hypothesis depths.
    """

    data: np.ndarray
    mask: np.ndarray
    depths: np.ndarray

    @property
    def num_hypotheses(self) -> int:
        return self.data.shape[2]

    @property
    def num_groups(self) -> int:
        return self.data.shape[3]

    @property
    def nbytes(self) -> int:
        return self.data.nbytes + self.mask.nbytes


def hypothesis_plane(depths: np.ndarray, index: int, shape: tuple[int, int]) -> np.ndarray:
    """The depth plane for hypothesis ``index`` as an (H, W) array."""
    d = np.asarray(depths, dtype=np.float64)
    if d.ndim == 1:
        return np.full(shape, d[index])
    return d[:, :, index]


def build_cost_volume(
    ref_features: np.ndarray,
    sources: list[tuple[np.ndarray, WarpOperator]],
    depths: np.ndarray,
    groups: int,
) -> CostVolume:
    """Plane-sweep a reference feature map against warped source features.

    For every (pixel, hypothesis) pair each source view is warped onto the
    hypothesis plane and sampled bilinearly; scores are group-wise
    correlations averaged over the views whose warp lands in bounds.

    Args:
        ref_features: (H, W, C) reference features.
        sources: (features, warp operator) per source view.
        depths: (D,) shared or (H, W, D) per-pixel hypothesis depths.
        groups: correlation group count.

    Returns:
        CostVolume with mask counting contributing views per entry.
    """
    if not sources:
        raise InputError("need at least one source view")
    h, w, c = ref_features.shape
    if groups < 1 or c % groups:
        raise InputError(f"groups ({groups}) must divide channels ({c})")
    d_arr = np.asarray(depths, dtype=np.float64)
    if d_arr.ndim == 3:
        if d_arr.shape[:2] != (h, w):
            raise InputError(f"per-pixel depths {d_arr.shape} do not match feature grid {(h, w)}")
    elif d_arr.ndim != 1:
        raise InputError(f"depths must be (D,) or (H, W, D), got {d_arr.shape}")
    num_d = d_arr.shape[-1]
    ref_grouped = ref_features.astype(np.float64).reshape(h, w, groups, c // groups)
    ys, xs = np.mgrid[0:h, 0:w]
    pixels = np.stack([xs, ys], axis=-1).astype(np.float64)
    data = np.zeros((h, w, num_d, groups), dtype=np.float64)
    count = np.zeros((h, w, num_d), dtype=np.int16)
    for src_features, op in sources:
        rays = op.rays(pixels)
        for j in range(num_d):
            plane = hypothesis_plane(d_arr, j, (h, w))
            coords, in_front = op.warp_rays(rays, plane)
            sampled, in_bounds = bilinear_sample(src_features, coords)
            valid = in_front & in_bounds
            src_grouped = sampled.astype(np.float64).reshape(h, w, groups, c // groups)
            corr = (ref_grouped * src_grouped).sum(axis=-1) * (groups / c)
            data[:, :, j] += np.where(valid[:, :, None], corr, 0.0)
            count[:, :, j] += valid
    with np.errstate(invalid="ignore"):
        data /= np.maximum(count, 1)[:, :, :, None]
    invalid_share = float((count == 0).mean())
    if invalid_share >= 0.5:
        logger.warning("cost volume is %.0f%% invalid (warps mostly out of bounds)", 100 * invalid_share)
    return CostVolume(data.astype(np.float32), count, d_arr)


def aggregate(volume: CostVolume, radius: int) -> CostVolume:
    """Spatially smooth a cost volume and collapse its groups.

    Each depth slice is box-filtered over the valid entries only (invalid
    neighbors are excluded from the average, not zero-filled), then the group
    scores are averaged into a single channel. Output layout is
    (H, W, D, 1) with the input's validity mask.
    """
    if radius < 0:
        raise InputError("radius must be >= 0")
    h, w, num_d, _ = volume.data.shape
    score = volume.data.mean(axis=3, dtype=np.float64)
    valid = (volume.mask > 0).astype(np.float64)
    if radius > 0:
        smoothed = np.empty_like(score)
        for j in range(num_d):
            weight = _box_sum(valid[:, :, j], radius)
            total = _box_sum(score[:, :, j] * valid[:, :, j], radius)
            with np.errstate(invalid="ignore", divide="ignore"):
                smoothed[:, :, j] = np.where(weight > 0, total / np.maximum(weight, 1e-300), 0.0)
        score = smoothed
    score = np.where(volume.mask > 0, score, 0.0)
    return CostVolume(score[:, :, :, None].astype(np.float32), volume.mask, volume.depths)


@dataclasses.dataclass(frozen=True)
class ProbabilityVolume:
    """Per-pixel distributions over depth hypotheses.

    Attributes:
        probs: (H, W, D), rows sum to 1.
        depths: (D,) shared or (H, W, D) hypothesis depths.
        valid: (H, W) bool; False where every hypothesis was masked and the
            row fell back to uniform.
    """

    probs: np.ndarray
    depths: np.ndarray
    valid: np.ndarray

    @property
    def num_hypotheses(self) -> int:
        return self.probs.shape[2]

    @property
    def nbytes(self) -> int:
        return self.probs.nbytes


def softmax_volume(volume: CostVolume, sharpness: float = 1.0) -> ProbabilityVolume:
    """Turn aggregated scores into per-pixel depth distributions.

    Scores are multiplied by ``sharpness`` and passed through a max-subtracted
    softmax; masked hypotheses are excluded. Pixels with no valid hypothesis
    get a uniform row and a False validity flag.
    """
    if sharpness <= 0:
        raise InputError("sharpness must be positive")
    scores = volume.data.mean(axis=3, dtype=np.float64) * sharpness
    masked = volume.mask == 0
    scores = np.where(masked, -np.inf, scores)
    peak = scores.max(axis=2, keepdims=True)
    valid = np.isfinite(peak[:, :, 0])
    shifted = np.where(masked, -np.inf, scores - np.where(np.isfinite(peak), peak, 0.0))
    with np.errstate(invalid="ignore"):
        expd = np.where(masked, 0.0, np.exp(shifted))
    norm = expd.sum(axis=2, keepdims=True)
    num_d = volume.num_hypotheses
    probs = np.where(valid[:, :, None], expd / np.where(norm > 0, norm, 1.0), 1.0 / num_d)
    return ProbabilityVolume(probs.astype(np.float32), volume.depths, valid)


def regress_depth(pv: ProbabilityVolume) -> tuple[np.ndarray, np.ndarray]:
    """Soft-argmax depth and peak-probability confidence.

    Returns:
        (H, W) float64 expected depth and (H, W) float64 confidence, the
        per-pixel maximum probability.
    """
    probs = pv.probs.astype(np.float64)
    d = np.asarray(pv.depths, dtype=np.float64)
    if d.ndim == 1:
        depth = probs @ d
    else:
        depth = (probs * d).sum(axis=2)
    confidence = probs.max(axis=2)
    return depth, confidence
