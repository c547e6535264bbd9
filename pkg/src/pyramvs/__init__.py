"""Coarse-to-fine plane-sweep multi-view stereo with adaptive depth sampling."""

from .camera import CameraParams, RelativePose, look_at, relative_pose
from .config import PipelineConfig, load_config, parse_config_text
from .errors import InputError, NoParallaxError, NumericalError
from .fusion import FusedPointCloud, consistency_check, fuse, read_ply, write_ply
from .pipeline import PipelineResult, StageTrace, ablation_run, run_pipeline
from .synth import SceneSpec, SyntheticScene, eval_cloud, eval_depth, load_scene_spec, render_scene

__version__ = "0.1.0"

__all__ = [
    "CameraParams",
    "FusedPointCloud",
    "InputError",
    "NoParallaxError",
    "NumericalError",
    "PipelineConfig",
    "PipelineResult",
    "RelativePose",
    "SceneSpec",
    "StageTrace",
    "SyntheticScene",
    "ablation_run",
    "consistency_check",
    "eval_cloud",
    "eval_depth",
    "fuse",
    "load_config",
    "load_scene_spec",
    "look_at",
    "parse_config_text",
    "read_ply",
    "relative_pose",
    "render_scene",
    "run_pipeline",
    "write_ply",
    "__version__",
]
