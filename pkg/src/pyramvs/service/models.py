"""Request and response bodies for every job the toolbox can run.

All paths are interpreted on the machine executing the handler. Fields
mirror the core defaults so an empty override means "use the default";
`None` consistently means "not requested" or "take it from the config
file".
"""

from __future__ import annotations

from pydantic import BaseModel, Field

STRATEGIES = ("full", "dhs1", "dhs1+dhs2", "dhs1+dhs3")
SURFACES = ("plane", "sphere", "step")


class StageSummary(BaseModel):
    """One pipeline stage as recorded in the run trace."""

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


class DepthRequest(BaseModel):
    """Estimate the reference view's depth map from posed images.

    Camera files are looked up in `cams` as `<image stem>_cam.txt`.
    """

    ref: str
    src: list[str] = Field(min_length=1)
    cams: str
    config: str | None = None
    levels: int | None = None
    strategy: str = "full"
    auf: bool | None = None
    out: str
    confidence_out: str | None = None


class DepthResponse(BaseModel):
    out: str
    confidence_out: str | None
    width: int
    height: int
    finest_spacing: float
    stages: list[StageSummary]


class SynthRequest(BaseModel):
    """Render a synthetic scene to images, depth maps, and camera files.

    Either `scene` names a scene-spec text file or `surface` picks a
    primitive with default parameters; `seed` overrides the texture seed
    in both cases.
    """

    scene: str | None = None
    surface: str = "plane"
    seed: int | None = None
    out: str
    gt_cloud: str | None = None
    gt_cloud_stride: int = Field(default=1, ge=1)
    min_visibility: int = Field(default=2, ge=1)


class SynthResponse(BaseModel):
    out: str
    views: int
    width: int
    height: int
    depth_min: float
    depth_max: float
    images: list[str]
    cams: list[str]
    depths: list[str]
    gt_cloud: str | None
    gt_cloud_points: int | None
    spec: dict


class FuseRequest(BaseModel):
    """Fuse per-view depth maps into one consistency-checked point cloud.

    `depths`, `images` pair up by position; the camera for position i is
    `<stem of depths[i]>_cam.txt` under `cams`.
    """

    depths: list[str] = Field(min_length=2)
    images: list[str] = Field(min_length=2)
    cams: str
    out: str
    min_support: int = 2
    tau_px: float = 1.0
    tau_rel: float = 0.01
    voxel_size: float = 0.0


class FuseResponse(BaseModel):
    out: str
    points: int
    mean_support: float


class EvalDepthRequest(BaseModel):
    """Score an estimated depth map against a ground-truth map."""

    est: str
    gt: str
    spacing: float = Field(default=1.0, gt=0)
    margin: int = Field(default=0, ge=0)


class EvalDepthResponse(BaseModel):
    mean_abs: float
    median_abs: float
    frac_within_1: float
    frac_within_2: float
    frac_within_4: float


class EvalCloudRequest(BaseModel):
    """Score an estimated point cloud against a ground-truth cloud."""

    est: str
    gt: str
    truncation: float | None = Field(default=None, gt=0)


class EvalCloudResponse(BaseModel):
    accuracy: float
    completeness: float
    overall: float


class LosscheckRequest(BaseModel):
    instances: int = Field(default=50, ge=1)
    seed: int = 0


class LosscheckRow(BaseModel):
    name: str
    value: float
    tolerance: float
    passed: bool


class LosscheckResponse(BaseModel):
    rows: list[LosscheckRow]
    passed: bool


class CalibrateRequest(BaseModel):
    """Sweep the interval scale parameters on a synthetic scene."""

    scene: str | None = None
    surface: str = "plane"
    seed: int | None = None
    config: str | None = None
    alphas: list[float] = Field(default=[0.5, 1.0, 1.5, 2.0], min_length=1)
    betas: list[float] = Field(default=[0.0], min_length=1)


class CalibrateRow(BaseModel):
    alpha: float
    beta: float
    mean_abs: float
    median_abs: float
    stage2_width_median: float


class CalibrateResponse(BaseModel):
    rows: list[CalibrateRow]
    best_alpha: float
    best_beta: float


class AblateRequest(BaseModel):
    """Run every strategy schedule on one scene and tabulate depth errors."""

    scene: str | None = None
    surface: str = "step"
    seed: int | None = None
    config: str | None = None


class AblateResponse(BaseModel):
    spacing: float
    schedules: dict[str, EvalDepthResponse]


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorPayload(BaseModel):
    error_type: str
    message: str
