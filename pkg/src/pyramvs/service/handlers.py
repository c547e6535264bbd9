"""In-process job execution: one handler per request model.

Handlers do all file IO and call into the core package; the FastAPI app
and the command line both dispatch here, so behavior cannot drift between
the two surfaces. Handlers raise `InputError` for bad requests or
unreadable inputs and let `NumericalError` propagate from the core.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from pathlib import Path

import numpy as np

from .. import __version__
from ..config import PipelineConfig, load_config
from ..errors import InputError
from ..formats import (
    read_camera_dtu,
    read_image_8bit,
    read_pfm,
    write_camera_dtu,
    write_image_8bit,
    write_pfm,
)
from ..fusion import FusedPointCloud, fuse, read_ply, write_ply
from ..pipeline import ablation_run, calibrate_interval, run_pipeline
from ..synth import SceneSpec, eval_cloud, eval_depth, load_scene_spec, render_scene
from ..unimodal import losscheck
from . import models

logger = logging.getLogger(__name__)


def _require_file(path: str, kind: str) -> Path:
    resolved = Path(path)
    if not resolved.is_file():
        raise InputError(f"{kind} file not found: {path}")
    return resolved


def _ensure_parent(path: str) -> str:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return path


def _camera_for(image_path: str, cams_dir: str):
    stem = Path(image_path).stem
    cam_path = Path(cams_dir) / f"{stem}_cam.txt"
    if not cam_path.is_file():
        raise InputError(f"camera file not found: {cam_path}")
    return read_camera_dtu(cam_path)


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return load_config(_require_file(path, "config"))


def _resolve_scene(scene: str | None, surface: str, seed: int | None):
    if scene is not None:
        spec = load_scene_spec(_require_file(scene, "scene"))
        if seed is not None:
            spec = dataclasses.replace(spec, seed=seed)
    else:
        if surface not in models.SURFACES:
            raise InputError(f"unknown surface {surface!r}, expected one of {models.SURFACES}")
        kwargs = {"surface": surface}
        if seed is not None:
            kwargs["seed"] = seed
        spec = SceneSpec(**kwargs)
    return spec, render_scene(spec)


def health() -> models.HealthResponse:
    return models.HealthResponse(status="ok", version=__version__)


def depth(req: models.DepthRequest) -> models.DepthResponse:
    if req.strategy not in models.STRATEGIES:
        raise InputError(f"unknown strategy {req.strategy!r}, expected one of {models.STRATEGIES}")
    paths = [req.ref] + list(req.src)
    images = [read_image_8bit(_require_file(p, "image")) for p in paths]
    cameras = [_camera_for(p, req.cams) for p in paths]
    config = _load_config(req.config)
    replacements = {}
    if req.levels is not None:
        replacements["levels"] = req.levels
    if req.auf is not None:
        replacements["auf"] = req.auf
    if replacements:
        config = dataclasses.replace(config, **replacements)
    result = run_pipeline(images, cameras, config, strategy=req.strategy)
    write_pfm(_ensure_parent(req.out), result.depth.astype(np.float32))
    if req.confidence_out is not None:
        write_pfm(_ensure_parent(req.confidence_out), result.confidence.astype(np.float32))
    height, width = result.depth.shape
    return models.DepthResponse(
        out=req.out,
        confidence_out=req.confidence_out,
        width=width,
        height=height,
        finest_spacing=result.finest_spacing,
        stages=[models.StageSummary(**trace.summary()) for trace in result.traces],
    )


def synth(req: models.SynthRequest) -> models.SynthResponse:
    spec, scene = _resolve_scene(req.scene, req.surface, req.seed)
    out = Path(req.out)
    for sub in ("images", "cams", "depths"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    image_paths = []
    cam_paths = []
    depth_paths = []
    for index, (image, camera, gt) in enumerate(zip(scene.images, scene.cameras, scene.gt_depths)):
        image_path = out / "images" / f"{index:08d}.png"
        cam_path = out / "cams" / f"{index:08d}_cam.txt"
        depth_path = out / "depths" / f"{index:08d}.pfm"
        write_image_8bit(image_path, image)
        write_camera_dtu(cam_path, camera)
        write_pfm(depth_path, gt.astype(np.float32))
        image_paths.append(str(image_path))
        cam_paths.append(str(cam_path))
        depth_paths.append(str(depth_path))
    gt_cloud_path = None
    gt_cloud_points = None
    if req.gt_cloud is not None:
        points = scene.gt_cloud(min_visibility=req.min_visibility, stride=req.gt_cloud_stride)
        cloud = FusedPointCloud(
            points=points,
            colors=np.full((len(points), 3), 128, dtype=np.uint8),
            support=np.ones(len(points), dtype=np.int32),
        )
        write_ply(_ensure_parent(req.gt_cloud), cloud)
        gt_cloud_path = req.gt_cloud
        gt_cloud_points = len(points)
    camera = scene.cameras[0]
    return models.SynthResponse(
        out=str(out),
        views=len(scene.images),
        width=spec.width,
        height=spec.height,
        depth_min=camera.depth_min,
        depth_max=camera.depth_max,
        images=image_paths,
        cams=cam_paths,
        depths=depth_paths,
        gt_cloud=gt_cloud_path,
        gt_cloud_points=gt_cloud_points,
        spec=dataclasses.asdict(spec),
    )


def fuse_job(req: models.FuseRequest) -> models.FuseResponse:
    if len(req.depths) != len(req.images):
        raise InputError("depths and images must pair up one to one")
    depth_maps = [read_pfm(_require_file(p, "depth map")) for p in req.depths]
    images = [read_image_8bit(_require_file(p, "image")) for p in req.images]
    cameras = [_camera_for(p, req.cams) for p in req.depths]
    cloud = fuse(
        depth_maps,
        cameras,
        images,
        min_support=req.min_support,
        tau_px=req.tau_px,
        tau_rel=req.tau_rel,
        voxel_size=req.voxel_size,
    )
    write_ply(_ensure_parent(req.out), cloud)
    mean_support = float(cloud.support.mean()) if len(cloud) else 0.0
    return models.FuseResponse(out=req.out, points=len(cloud), mean_support=mean_support)


def eval_depth_job(req: models.EvalDepthRequest) -> models.EvalDepthResponse:
    est = read_pfm(_require_file(req.est, "estimated depth"))
    gt = read_pfm(_require_file(req.gt, "ground-truth depth"))
    if est.ndim != 2 or gt.ndim != 2:
        raise InputError("depth maps must be single-channel")
    gt = gt[: est.shape[0], : est.shape[1]]
    if est.shape != gt.shape:
        raise InputError(f"shape mismatch: estimate {est.shape} vs ground truth {gt.shape}")
    m = req.margin
    if m > 0:
        if 2 * m >= min(est.shape):
            raise InputError(f"margin {m} leaves no interior for shape {est.shape}")
        est = est[m:-m, m:-m]
        gt = gt[m:-m, m:-m]
    stats = eval_depth(est.astype(np.float64), gt.astype(np.float64), req.spacing)
    return models.EvalDepthResponse(**stats)


def eval_cloud_job(req: models.EvalCloudRequest) -> models.EvalCloudResponse:
    est = read_ply(_require_file(req.est, "estimated cloud"))
    gt = read_ply(_require_file(req.gt, "ground-truth cloud"))
    truncation = math.inf if req.truncation is None else req.truncation
    stats = eval_cloud(est, gt, truncation)
    return models.EvalCloudResponse(**stats)


def losscheck_job(req: models.LosscheckRequest) -> models.LosscheckResponse:
    rows = losscheck(instances=req.instances, seed=req.seed)
    return models.LosscheckResponse(
        rows=[models.LosscheckRow(**row) for row in rows],
        passed=all(row["passed"] for row in rows),
    )


def calibrate_job(req: models.CalibrateRequest) -> models.CalibrateResponse:
    _, scene = _resolve_scene(req.scene, req.surface, req.seed)
    config = _load_config(req.config)
    table = calibrate_interval(scene, config, req.alphas, req.betas)
    return models.CalibrateResponse(
        rows=[models.CalibrateRow(**row) for row in table["rows"]],
        best_alpha=table["best"]["alpha"],
        best_beta=table["best"]["beta"],
    )


def ablate_job(req: models.AblateRequest) -> models.AblateResponse:
    _, scene = _resolve_scene(req.scene, req.surface, req.seed)
    config = _load_config(req.config)
    table = ablation_run(scene, config)
    return models.AblateResponse(
        spacing=table["spacing"],
        schedules={
            name: models.EvalDepthResponse(**stats) for name, stats in table["schedules"].items()
        },
    )
