"""Depth hypothesis strategies and the per-stage schedule.

Stage 1 sweeps the whole scene range uniformly. Stage 2 shrinks to a per-pixel
confidence interval derived from the stage-1 distribution's variance. Later
stages use the epipolar differential: the depth change that moves a pixel by
one source-image pixel, so the search width tracks image resolution with no
tunable parameters. Overrides swap strategies per stage for ablation runs.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .config import STRATEGY_OVERRIDES
from .errors import InputError
from .geometry import WarpOperator, bilinear_sample, depth_step_map
from .matching import ProbabilityVolume

DEGENERATE_WIDTH_FLOOR = 1e-9


@dataclasses.dataclass(frozen=True)
class DepthHypotheses:
    """Sorted depth candidates, shared across pixels or per pixel.

    Attributes:
        depths: (D,) float64 for shared mode, (H, W, D) for per-pixel mode;
            strictly increasing along the last axis, all positive.
    """

    depths: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.depths, dtype=np.float64)
        if d.ndim not in (1, 3):
            raise InputError(f"hypotheses must be (D,) or (H, W, D), got shape {d.shape}")
        if d.shape[-1] < 2:
            raise InputError("need at least 2 hypotheses")
        if d.min() <= 0:
            raise InputError("hypothesis depths must be positive")
        if np.diff(d, axis=-1).min() <= 0:
            raise InputError("hypothesis depths must be strictly increasing")
        object.__setattr__(self, "depths", d)

    @property
    def shared(self) -> bool:
        return self.depths.ndim == 1

    @property
    def count(self) -> int:
        return self.depths.shape[-1]

    def spacing(self) -> np.ndarray:
        """Mean step between consecutive hypotheses, per pixel (or scalar array)."""
        d = self.depths
        return (d[..., -1] - d[..., 0]) / (d.shape[-1] - 1)


def dhs1_uniform(depth_min: float, depth_max: float, count: int) -> DepthHypotheses:
    """Uniform samples over the whole scene depth range, shared by all pixels."""
    if not depth_min < depth_max:
        raise InputError(f"need depth_min < depth_max, got [{depth_min}, {depth_max}]")
    if count < 2:
        raise InputError("need at least 2 hypotheses")
    return DepthHypotheses(np.linspace(depth_min, depth_max, count, dtype=np.float64))


def pixel_variance(pv: ProbabilityVolume, depth_map: np.ndarray) -> np.ndarray:
    """Per-pixel variance of the depth distribution around its soft argmax.

    V_i = sum_j P_ij * (d_ij - dhat_i)^2, in double precision.
    """
    probs = np.asarray(pv.probs, dtype=np.float64)
    d = np.asarray(pv.depths, dtype=np.float64)
    dhat = np.asarray(depth_map, dtype=np.float64)
    if d.ndim == 1:
        diff = d[None, None, :] - dhat[:, :, None]
    else:
        diff = d - dhat[:, :, None]
    return (probs * diff * diff).sum(axis=2)


def variance_interval(
    depth_map: np.ndarray, variance: np.ndarray, alpha: float, beta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Raw confidence interval dhat -/+ (alpha * sqrt(V) + beta), no clamping."""
    dhat = np.asarray(depth_map, dtype=np.float64)
    v = np.asarray(variance, dtype=np.float64)
    if (v < 0).any():
        raise InputError("variance must be non-negative")
    half = alpha * np.sqrt(v) + beta
    return dhat - half, dhat + half


def _fit_interval(
    low: np.ndarray,
    high: np.ndarray,
    depth_min: float,
    depth_max: float,
    min_width: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Clamp intervals into the scene range, widening degenerate ones first.

    Intervals narrower than min_width are widened symmetrically, then shifted
    (not shrunk) to fit inside [depth_min, depth_max]; if the scene range
    itself is narrower than the requested width, the full range is used.
    """
    low = np.clip(low, depth_min, depth_max)
    high = np.clip(high, depth_min, depth_max)
    width = np.maximum(high - low, max(min_width, DEGENERATE_WIDTH_FLOOR))
    width = np.minimum(width, depth_max - depth_min)
    center = 0.5 * (low + high)
    low = center - 0.5 * width
    high = center + 0.5 * width
    shift_up = np.maximum(depth_min - low, 0.0)
    low += shift_up
    high += shift_up
    shift_down = np.maximum(high - depth_max, 0.0)
    low -= shift_down
    high -= shift_down
    return low, high


def _uniform_per_pixel(low: np.ndarray, high: np.ndarray, count: int) -> DepthHypotheses:
    steps = np.arange(count, dtype=np.float64)
    depths = low[:, :, None] + steps * ((high - low) / (count - 1))[:, :, None]
    return DepthHypotheses(depths)


def dhs2_variance_interval(
    depth_map: np.ndarray,
    variance: np.ndarray,
    alpha: float,
    beta: float,
    count: int,
    depth_min: float,
    depth_max: float,
    min_width: float,
) -> DepthHypotheses:
    """Per-pixel uniform samples inside the variance confidence interval.

    Args:
        depth_map: (H, W) current depth estimate.
        variance: (H, W) distribution variance from pixel_variance.
        alpha: scale on sqrt(variance), unitless.
        beta: additive half-width, scene units.
        count: hypotheses per pixel.
        depth_min: scene range lower bound.
        depth_max: scene range upper bound.
        min_width: degenerate-interval floor, scene units.
    """
    if count < 2:
        raise InputError("need at least 2 hypotheses")
    low, high = variance_interval(depth_map, variance, max(alpha, 0.0), max(beta, 0.0))
    low, high = _fit_interval(low, high, depth_min, depth_max, min_width)
    return _uniform_per_pixel(low, high, count)


def dhs3_epipolar(
    depth_map: np.ndarray,
    operators: list[WarpOperator],
    count: int,
    delta: float,
    depth_min: float,
    depth_max: float,
    fallback_half_width: float,
) -> DepthHypotheses:
    """Per-pixel samples spanning +/- (count/2) * delta pixels of epipolar motion.

    The per-view depth step for one pixel of source-image motion comes from
    the warp's analytic depth derivative; per-pixel steps are averaged over
    the views with usable parallax. Pixels where every view is degenerate
    fall back to a fixed half-width.

    Args:
        depth_map: (H, W) upsampled depth estimate at the target resolution.
        operators: reference-to-source warp operators.
        count: hypotheses per pixel.
        delta: pixels of epipolar motion per hypothesis step.
        depth_min: scene range lower bound.
        depth_max: scene range upper bound.
        fallback_half_width: half-width, scene units, when no view has parallax.
    """
    if count < 2:
        raise InputError("need at least 2 hypotheses")
    if not operators:
        raise InputError("need at least one source view")
    if delta <= 0:
        raise InputError("delta must be positive")
    dhat = np.asarray(depth_map, dtype=np.float64)
    h, w = dhat.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pixels = np.stack([xs, ys], axis=-1).astype(np.float64)
    step_sum = np.zeros((h, w))
    step_count = np.zeros((h, w), dtype=np.int32)
    for op in operators:
        step, valid = depth_step_map(op, pixels, dhat)
        step_sum += np.where(valid, step, 0.0)
        step_count += valid
    mean_step = np.where(step_count > 0, step_sum / np.maximum(step_count, 1), 0.0)
    half = (count / 2.0) * delta * mean_step
    half = np.where(step_count > 0, half, fallback_half_width)
    low, high = _fit_interval(dhat - half, dhat + half, depth_min, depth_max, 0.0)
    return _uniform_per_pixel(low, high, count)


def uniform_about(
    depth_map: np.ndarray,
    width: float,
    count: int,
    depth_min: float,
    depth_max: float,
) -> DepthHypotheses:
    """Per-pixel uniform samples of fixed width centered on the estimate.

    The handcrafted refinement used by the all-uniform ablation schedule:
    the interval is shifted (not shrunk) to stay inside the scene range.
    """
    if count < 2:
        raise InputError("need at least 2 hypotheses")
    if width <= 0:
        raise InputError("width must be positive")
    dhat = np.asarray(depth_map, dtype=np.float64)
    low, high = _fit_interval(dhat - width / 2, dhat + width / 2, depth_min, depth_max, width)
    return _uniform_per_pixel(low, high, count)


def upsample_depth(depth_map: np.ndarray, target_shape: tuple[int, int]) -> np.ndarray:
    """Bilinearly upsample a depth map to target (H, W), corners aligned.

    Exact (to round-off) on affine depth fields; corner values are preserved.
    """
    dm = np.asarray(depth_map, dtype=np.float64)
    h, w = dm.shape
    th, tw = target_shape
    if th < 1 or tw < 1:
        raise InputError(f"bad target shape {target_shape}")
    ys = np.linspace(0.0, h - 1, th) if th > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1, tw) if tw > 1 else np.zeros(1)
    grid_x, grid_y = np.meshgrid(xs, ys)
    coords = np.stack([grid_x, grid_y], axis=-1)
    values, _ = bilinear_sample(dm, coords)
    return values


def schedule(stage: int, override: str = "full") -> str:
    """Strategy name ("dhs1" | "dhs2" | "dhs3") for a 1-based stage index."""
    if stage < 1:
        raise InputError(f"stage index must be >= 1, got {stage}")
    if override not in STRATEGY_OVERRIDES:
        raise InputError(f"unknown strategy override '{override}' (choices: {STRATEGY_OVERRIDES})")
    if stage == 1 or override == "dhs1":
        return "dhs1"
    if override == "dhs1+dhs2":
        return "dhs2"
    if override == "dhs1+dhs3":
        return "dhs3"
    return "dhs2" if stage == 2 else "dhs3"
