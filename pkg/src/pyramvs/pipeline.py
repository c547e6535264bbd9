"""The coarse-to-fine orchestrator: stages, strategy schedule, tracing.

Stage 1 matches over the full depth range at the coarsest level. Each later
stage doubles resolution, re-centers its per-pixel hypotheses on the
upsampled estimate (confidence-interval or epipolar width, per the
schedule), and repeats the matching path. Volumes are torn down as soon as
the next product exists, so peak memory stays within twice the largest
single cost volume; every run is a pure function of its inputs.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from collections.abc import Sequence

import numpy as np

from . import matching, sampling
from .camera import CameraParams
from .config import STRATEGY_OVERRIDES, PipelineConfig
from .errors import InputError, NumericalError
from .geometry import WarpOperator
from .image import PyramidLevel, build_pyramid
from .synth import SyntheticScene, eval_depth
from .unimodal import UnimodalParams, auf_filter

logger = logging.getLogger(__name__)

ABORT_INVALID_SHARE = 0.9


@dataclasses.dataclass(frozen=True)
class StageTrace:
    """Execution record of one pyramid stage.

    Attributes:
        stage: 1-based stage index, coarse to fine.
        strategy: "dhs1" | "dhs2" | "dhs3".
        shape: (H, W) at this stage.
        hyp_count: hypotheses per pixel.
        width_min/width_median/width_max: per-pixel hypothesis interval
            widths, scene units.
        seconds: wall time of the stage.
        volume_bytes: cost-volume size at this stage.
        peak_bytes: largest sum of simultaneously live volume buffers.
        invalid_share: fraction of pixels with no valid hypothesis.
    """

    stage: int
    strategy: str
    shape: tuple[int, int]
    hyp_count: int
    width_min: float
    width_median: float
    width_max: float
    seconds: float
    volume_bytes: int
    peak_bytes: int
    invalid_share: float

    def summary(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class PipelineResult:
    """Final depth estimate plus per-stage outputs and traces."""

    depth: np.ndarray
    confidence: np.ndarray
    stage_depths: list[np.ndarray]
    stage_confidences: list[np.ndarray]
    traces: list[StageTrace]

    @property
    def finest_spacing(self) -> float:
        """Median hypothesis spacing of the last stage."""
        last = self.traces[-1]
        return last.width_median / (last.hyp_count - 1)


def _interval_widths(hyps: sampling.DepthHypotheses) -> tuple[float, float, float]:
    d = hyps.depths
    widths = d[..., -1] - d[..., 0]
    return float(widths.min()), float(np.median(widths)), float(widths.max())


def run_pipeline(
    images: list[np.ndarray],
    cameras: list[CameraParams],
    config: PipelineConfig,
    strategy: str = "full",
) -> PipelineResult:
    """Estimate the reference view's depth map from posed images.

    Args:
        images: grayscale or RGB images in [0, 1]; index 0 is the reference.
        cameras: matching cameras; the reference camera's depth range bounds
            all hypotheses.
        config: run parameters.
        strategy: schedule override ("full", "dhs1", "dhs1+dhs2", "dhs1+dhs3").

    Returns:
        PipelineResult; ``depth`` is the finest-stage estimate, per-stage
        maps and traces are in stage order.

    Raises:
        InputError: inconsistent view dimensions or bad configuration.
        NumericalError: a stage left >= 90% of pixels without any valid
            hypothesis (views do not overlap at the hypothesized depths).
    """
    if len(images) < 2 or len(images) != len(cameras):
        raise InputError("need >= 2 views with one camera each")
    shapes = {np.asarray(img).shape[:2] for img in images}
    if len(shapes) != 1:
        raise InputError(f"views must share dimensions, got {sorted(shapes)}")
    sampling.schedule(1, strategy)
    levels = config.levels
    pyramids = [build_pyramid(img, cam, levels) for img, cam in zip(images, cameras)]
    depth_min = cameras[0].depth_min
    depth_max = cameras[0].depth_max
    full_range = depth_max - depth_min
    counts = config.stage_hyp_counts()
    spacing1 = full_range / (counts[0] - 1)
    unimodal_params = UnimodalParams(config.alpha_conf, config.beta_conf, config.gamma, config.focal_conventional)

    traces: list[StageTrace] = []
    stage_depths: list[np.ndarray] = []
    stage_confidences: list[np.ndarray] = []
    prev_pv: matching.ProbabilityVolume | None = None
    prev_conf: np.ndarray | None = None
    prev_depth: np.ndarray | None = None
    prev_spacing_median = spacing1

    for stage in range(1, levels + 1):
        started = time.perf_counter()
        level: list[PyramidLevel] = [pyr[stage - 1] for pyr in pyramids]
        shape = level[0].shape
        chosen = sampling.schedule(stage, strategy)
        count = counts[stage - 1]
        operators = [WarpOperator.between(level[0].camera, lv.camera) for lv in level[1:]]

        if stage == 1:
            hyps = sampling.dhs1_uniform(depth_min, depth_max, count)
        else:
            upsampled = sampling.upsample_depth(prev_depth, shape)
            if chosen == "dhs2":
                source_pv = prev_pv
                if config.auf:
                    source_pv = auf_filter(prev_pv, prev_conf, unimodal_params)
                center_depth, _ = matching.regress_depth(source_pv)
                if config.variance_post_auf or source_pv is prev_pv:
                    variance = sampling.pixel_variance(source_pv, center_depth)
                else:
                    # Variance from the unfiltered distribution, paired with
                    # its own expectation so the two stay consistent.
                    raw_center, _ = matching.regress_depth(prev_pv)
                    variance = sampling.pixel_variance(prev_pv, raw_center)
                center_up = sampling.upsample_depth(center_depth, shape)
                variance_up = np.maximum(sampling.upsample_depth(variance, shape), 0.0)
                floor = 2.0 * spacing1 / 2 ** (stage - 1)
                hyps = sampling.dhs2_variance_interval(
                    center_up,
                    variance_up,
                    config.interval_alpha,
                    config.interval_beta,
                    count,
                    depth_min,
                    depth_max,
                    floor,
                )
            elif chosen == "dhs3":
                hyps = sampling.dhs3_epipolar(
                    upsampled,
                    operators,
                    count,
                    config.dhs3_delta,
                    depth_min,
                    depth_max,
                    fallback_half_width=2.0 * prev_spacing_median,
                )
            else:
                width = full_range * config.dhs1_refine_fraction / 2 ** (stage - 2)
                hyps = sampling.uniform_about(upsampled, width, count, depth_min, depth_max)

        features = [matching.extract_features(lv.pixels, config.channels, config.groups) for lv in level]
        volume = matching.build_cost_volume(
            features[0], list(zip(features[1:], operators)), hyps.depths, config.groups
        )
        volume_bytes = volume.nbytes
        aggregated = matching.aggregate(volume, config.agg_radius)
        peak_bytes = volume.nbytes + aggregated.data.nbytes
        del volume
        pv = matching.softmax_volume(aggregated, config.softmax_sharpness)
        peak_bytes = max(peak_bytes, aggregated.data.nbytes + pv.nbytes)
        del aggregated
        depth_map, conf = matching.regress_depth(pv)

        invalid_share = float((~pv.valid).mean())
        if invalid_share >= ABORT_INVALID_SHARE:
            raise NumericalError(
                f"stage {stage}: {invalid_share:.0%} of pixels have no valid hypothesis "
                f"(views may not overlap in the depth range [{depth_min:g}, {depth_max:g}])"
            )

        w_min, w_med, w_max = _interval_widths(hyps)
        traces.append(
            StageTrace(
                stage=stage,
                strategy=chosen,
                shape=shape,
                hyp_count=count,
                width_min=w_min,
                width_median=w_med,
                width_max=w_max,
                seconds=time.perf_counter() - started,
                volume_bytes=volume_bytes,
                peak_bytes=peak_bytes,
                invalid_share=invalid_share,
            )
        )
        stage_depths.append(depth_map)
        stage_confidences.append(conf)
        prev_pv, prev_conf, prev_depth = pv, conf, depth_map
        prev_spacing_median = w_med / (count - 1)
        logger.debug(
            "stage %d (%s): %dx%d, D=%d, median width %.3f, %.2fs",
            stage, chosen, shape[1], shape[0], count, w_med, traces[-1].seconds,
        )

    return PipelineResult(stage_depths[-1], stage_confidences[-1], stage_depths, stage_confidences, traces)


def ablation_run(scene: SyntheticScene, config: PipelineConfig) -> dict:
    """Run every strategy schedule on one scene and tabulate depth errors.

    The error yardstick (one hypothesis spacing) is shared across schedules:
    the full schedule's finest-stage median spacing, so rows are comparable.

    Returns:
        {"spacing": float, "schedules": {override: eval_depth stats}}.
    """
    gray = scene.images
    gt = scene.gt_depths[0]
    results = {}
    spacing = None
    for override in STRATEGY_OVERRIDES:
        outcome = run_pipeline(gray, scene.cameras, config, strategy=override)
        if override == "full":
            spacing = outcome.finest_spacing
        crop = outcome.depth.shape
        results[override] = {
            "depth": outcome.depth,
            "gt": gt[: crop[0], : crop[1]],
        }
    table = {}
    for override, pair in results.items():
        table[override] = eval_depth(pair["depth"], pair["gt"], spacing)
    return {"spacing": spacing, "schedules": table}


def calibrate_interval(
    scene: SyntheticScene,
    config: PipelineConfig,
    alphas: Sequence[float],
    betas: Sequence[float],
) -> dict:
    """Grid-sweep the stage-2 interval scale parameters on one scene.

    Each (alpha, beta) pair is scored by the absolute error of the final
    depth map against ground truth; the best pair is the one with the
    smallest median error. Stage-2 median interval width is reported per
    row so the width/accuracy trade can be read off the table.

    Args:
        scene: rendered synthetic scene with ground-truth depths.
        config: base configuration; interval parameters are replaced per run.
        alphas: candidate variance scales, each >= 0.
        betas: candidate constant offsets in scene units, each >= 0.

    Returns:
        {"rows": [{alpha, beta, mean_abs, median_abs, stage2_width_median}],
         "best": {"alpha": float, "beta": float}}.
    """
    if len(alphas) == 0 or len(betas) == 0:
        raise InputError("calibration grid must contain at least one alpha and one beta")
    for value in list(alphas) + list(betas):
        if not np.isfinite(value) or value < 0:
            raise InputError(f"calibration grid values must be finite and >= 0, got {value}")
    gt = scene.gt_depths[0]
    rows = []
    for alpha in alphas:
        for beta in betas:
            trial = dataclasses.replace(
                config, interval_alpha=float(alpha), interval_beta=float(beta)
            )
            outcome = run_pipeline(scene.images, scene.cameras, trial)
            crop = outcome.depth.shape
            err = np.abs(outcome.depth - gt[: crop[0], : crop[1]])
            stage2 = outcome.traces[min(1, len(outcome.traces) - 1)]
            rows.append({
                "alpha": float(alpha),
                "beta": float(beta),
                "mean_abs": float(err.mean()),
                "median_abs": float(np.median(err)),
                "stage2_width_median": stage2.width_median,
            })
    best = min(rows, key=lambda row: row["median_abs"])
    return {"rows": rows, "best": {"alpha": best["alpha"], "beta": best["beta"]}}
