"""Run configuration: defaults, validation, and the key/value config file.

The config file is plain text, one ``key = value`` per line, ``#`` comments.
Every field has a default, so an empty file (or no file) is a valid run.
Tuple-valued fields take comma-separated lists and are resolved to the active
number of stages on demand (short tuples repeat their last entry).
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

from .errors import InputError

logger = logging.getLogger(__name__)

STRATEGY_OVERRIDES = ("full", "dhs1", "dhs1+dhs2", "dhs1+dhs3")


def _extend(values: tuple, n: int) -> tuple:
    """Resolve a per-stage tuple to exactly n entries, repeating the last."""
    if not values:
        raise InputError("per-stage tuple must be non-empty")
    if len(values) >= n:
        return tuple(values[:n])
    return tuple(values) + (values[-1],) * (n - len(values))


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    """All tunable parameters of the coarse-to-fine matcher.

    Attributes:
        levels: pyramid stage count (>= 2).
        hyp_counts: depth hypothesis count per stage, coarse first; extended
            with its last entry for extra stages.
        channels: feature channels C.
        groups: correlation groups G (must divide C).
        agg_radius: box-filter radius for cost aggregation, pixels.
        softmax_sharpness: scores are multiplied by this before the softmax;
            larger values sharpen the probability volume.
        interval_alpha: confidence-interval scale on sqrt(variance).
        interval_beta: confidence-interval offset, scene units.
        alpha_conf: unimodal sigma scale factor, hypothesis-index units.
        beta_conf: unimodal sigma lower bound, hypothesis-index units.
        gamma: focal exponent (>= 0).
        focal_conventional: use the conventional +gamma focal weighting
            instead of the default -gamma form.
        lambda_sf: total-loss weight of the stereo focal term.
        lambda_conf: total-loss weight of the confidence term.
        stage_weights: regression-loss weight per stage, coarse first.
        auf: apply adaptive unimodal filtering before interval estimation.
        variance_post_auf: compute the interval variance on filtered
            probabilities (flag exists because either reading is defensible).
        dhs3_delta: epipolar step per hypothesis, pixels.
        dhs1_refine_fraction: uniform-override stage-2 width as a fraction of
            the full range; halves per further stage.
        fuse_tau_px: reprojection round-trip pixel threshold.
        fuse_tau_rel: relative depth consistency threshold.
        fuse_min_support: minimum supporting source views to keep a pixel.
        eval_truncation_factor: cloud-metric truncation, x finest spacing.
    """

    levels: int = 3
    hyp_counts: tuple[int, ...] = (48, 32, 8)
    channels: int = 8
    groups: int = 4
    agg_radius: int = 2
    softmax_sharpness: float = 40.0
    interval_alpha: float = 1.0
    interval_beta: float = 0.0
    alpha_conf: float = 13.0
    beta_conf: float = 9.0
    gamma: float = 0.0
    focal_conventional: bool = False
    lambda_sf: float = 10.0
    lambda_conf: float = 80.0
    stage_weights: tuple[float, ...] = (0.5, 1.0, 2.0)
    auf: bool = True
    variance_post_auf: bool = True
    dhs3_delta: float = 0.5
    dhs1_refine_fraction: float = 0.0625
    fuse_tau_px: float = 1.0
    fuse_tau_rel: float = 0.01
    fuse_min_support: int = 2
    eval_truncation_factor: float = 20.0

    def __post_init__(self) -> None:
        if self.levels < 2:
            raise InputError(f"levels must be >= 2, got {self.levels}")
        if any(d < 2 for d in self.hyp_counts):
            raise InputError(f"every hypothesis count must be >= 2, got {self.hyp_counts}")
        if self.channels not in (4, 8, 16):
            raise InputError(f"channels must be one of 4, 8, 16, got {self.channels}")
        if self.groups < 1 or self.channels % self.groups:
            raise InputError(f"groups ({self.groups}) must divide channels ({self.channels})")
        if self.agg_radius < 0:
            raise InputError("agg_radius must be >= 0")
        if self.softmax_sharpness <= 0:
            raise InputError("softmax_sharpness must be positive")
        for name in ("lambda_sf", "lambda_conf", "gamma", "dhs3_delta", "alpha_conf"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")
        if self.beta_conf <= 0:
            raise InputError("beta_conf must be positive (sigma lower bound)")
        if any(w < 0 for w in self.stage_weights):
            raise InputError("stage weights must be >= 0")
        # Negative interval parameters would invert Eq-style intervals; clamp.
        if self.interval_alpha < 0 or self.interval_beta < 0:
            logger.warning(
                "clamping negative interval parameters (alpha=%g, beta=%g) to 0",
                self.interval_alpha,
                self.interval_beta,
            )
            object.__setattr__(self, "interval_alpha", max(0.0, self.interval_alpha))
            object.__setattr__(self, "interval_beta", max(0.0, self.interval_beta))
        if not 0 < self.dhs1_refine_fraction <= 1:
            raise InputError("dhs1_refine_fraction must be in (0, 1]")
        if self.fuse_tau_px <= 0 or self.fuse_tau_rel <= 0:
            raise InputError("fusion thresholds must be positive")
        if self.fuse_min_support < 1:
            raise InputError("fuse_min_support must be >= 1")
        if self.eval_truncation_factor <= 0:
            raise InputError("eval_truncation_factor must be positive")

    def stage_hyp_counts(self) -> tuple[int, ...]:
        return _extend(self.hyp_counts, self.levels)

    def resolved_stage_weights(self) -> tuple[float, ...]:
        return _extend(self.stage_weights, self.levels)


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _parse_value(name: str, text: str):
    kind = _FIELDS[name].type
    text = text.strip()
    if kind == "bool":
        if text.lower() in ("1", "true", "on", "yes"):
            return True
        if text.lower() in ("0", "false", "off", "no"):
            return False
        raise InputError(f"config key '{name}' expects a boolean, got '{text}'")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind.startswith("tuple[int"):
        return tuple(int(tok) for tok in text.split(","))
    if kind.startswith("tuple[float"):
        return tuple(float(tok) for tok in text.split(","))
    raise InputError(f"config key '{name}' has unsupported type {kind}")


def parse_config_text(text: str, overrides: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig from config-file text plus keyword overrides.

    Raises:
        InputError: unknown key, malformed line, or invalid value.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise InputError(f"config line {lineno}: unknown key '{key}'")
        try:
            values[key] = _parse_value(key, val)
        except ValueError as exc:
            raise InputError(f"config line {lineno}: {exc}") from exc
    if overrides:
        for key, val in overrides.items():
            if val is None:
                continue
            if key not in _FIELDS:
                raise InputError(f"unknown config override '{key}'")
            values[key] = val
    return PipelineConfig(**values)


def load_config(path: str | Path | None, overrides: dict | None = None) -> PipelineConfig:
    """Read a config file (optional) and apply overrides."""
    text = Path(path).read_text() if path is not None else ""
    return parse_config_text(text, overrides)
