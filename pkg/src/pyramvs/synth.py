"""Synthetic multi-view scenes with analytic ground truth, plus metrics.

Scenes are ray-cast against closed-form primitives (plane, sphere on a
backdrop, two-plane step), textured with seeded value noise evaluated in
world space so all views see the same albedo. Ground-truth depth is the
exact ray-surface intersection, which makes these scenes usable as oracles:
every downstream claim is checked against them.

Cameras sit on an arc around the scene center, all aimed at it. The depth
range written into each camera covers the rendered depths with a margin.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .camera import CameraParams, look_at
from .errors import InputError
from .geometry import bilinear_sample

SURFACES = ("plane", "sphere", "step")

_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_KX = np.uint64(0x9E3779B97F4A7C15)
_KY = np.uint64(0xC2B2AE3D27D4EB4F)
_KZ = np.uint64(0x165667B19E3779F9)


@dataclasses.dataclass(frozen=True)
class SceneSpec:
    """Declarative description of a synthetic scene.

    Attributes:
        surface: "plane", "sphere" or "step".
        width, height: image size in pixels.
        views: camera count (>= 2).
        fov_deg: horizontal field of view.
        ring_radius: camera distance from the scene center, scene units.
        ring_span_deg: total angular spread of the camera arc.
        surface_depth: distance from the central camera to the surface.
        sphere_radius: sphere scenes only.
        step_depth_offset: depth gap between the two step planes.
        step_split_x: world x coordinate of the step edge.
        flat_band_center: world x center of a textureless band, or None.
        flat_band_halfwidth: half-width of the textureless band (0 disables).
        texture_scale: world units per noise cell.
        texture_octaves: value-noise octave count.
        seed: texture seed.
        depth_margin: fractional margin applied to the rendered depth span
            when depth_min/depth_max are not given explicitly.
        depth_min, depth_max: explicit camera depth range (optional; rendering
            fails if the surface falls outside).
    """

    surface: str = "plane"
    width: int = 256
    height: int = 192
    views: int = 3
    fov_deg: float = 45.0
    ring_radius: float = 600.0
    ring_span_deg: float = 16.0
    surface_depth: float = 600.0
    sphere_radius: float = 150.0
    step_depth_offset: float = 50.0
    step_split_x: float = 0.0
    flat_band_center: float | None = None
    flat_band_halfwidth: float = 0.0
    texture_scale: float = 15.0
    texture_octaves: int = 3
    seed: int = 0
    depth_margin: float = 0.25
    depth_min: float | None = None
    depth_max: float | None = None

    def __post_init__(self) -> None:
        if self.surface not in SURFACES:
            raise InputError(f"surface must be one of {SURFACES}, got '{self.surface}'")
        if self.views < 2:
            raise InputError("need at least 2 views")
        if self.width < 8 or self.height < 8:
            raise InputError("scene images must be at least 8x8")
        if not 0 < self.fov_deg < 170:
            raise InputError("fov_deg must be in (0, 170)")
        if self.ring_radius <= 0 or self.surface_depth <= 0:
            raise InputError("ring_radius and surface_depth must be positive")
        if self.texture_scale <= 0 or self.texture_octaves < 1:
            raise InputError("bad texture parameters")


_SCENE_FIELDS = {f.name: f for f in dataclasses.fields(SceneSpec)}


def parse_scene_text(text: str) -> SceneSpec:
    """Parse the key/value scene description format."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"scene line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _SCENE_FIELDS:
            raise InputError(f"scene line {lineno}: unknown key '{key}'")
        kind = _SCENE_FIELDS[key].type
        try:
            if kind == "str":
                values[key] = val
            elif kind == "int":
                values[key] = int(val)
            elif kind.startswith("float | None"):
                values[key] = None if val.lower() == "none" else float(val)
            else:
                values[key] = float(val)
        except ValueError as exc:
            raise InputError(f"scene line {lineno}: {exc}") from exc
    return SceneSpec(**values)


def load_scene_spec(path: str | Path) -> SceneSpec:
    return parse_scene_text(Path(path).read_text())


def _hash_lattice(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic uint64 lattice hash mapped to [0, 1)."""
    h = (
        ix.astype(np.uint64) * _KX
        ^ iy.astype(np.uint64) * _KY
        ^ iz.astype(np.uint64) * _KZ
        ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    )
    h ^= h >> np.uint64(30)
    h *= _MIX1
    h ^= h >> np.uint64(27)
    h *= _MIX2
    h ^= h >> np.uint64(31)
    return h.astype(np.float64) / float(2**64)


def _value_noise(points: np.ndarray, seed: int) -> np.ndarray:
    """Smoothed trilinear value noise on the unit lattice, in [0, 1)."""
    base = np.floor(points)
    frac = points - base
    w = frac * frac * (3.0 - 2.0 * frac)
    idx = base.astype(np.int64)
    out = np.zeros(points.shape[:-1])
    for corner in range(8):
        dx, dy, dz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
        val = _hash_lattice(idx[..., 0] + dx, idx[..., 1] + dy, idx[..., 2] + dz, seed)
        weight = (
            (w[..., 0] if dx else 1.0 - w[..., 0])
            * (w[..., 1] if dy else 1.0 - w[..., 1])
            * (w[..., 2] if dz else 1.0 - w[..., 2])
        )
        out += val * weight
    return out


def albedo_at(points_world: np.ndarray, spec: SceneSpec, seed: int) -> np.ndarray:
    """World-space albedo in [0, 1]: multi-octave value noise, Lambertian."""
    total = np.zeros(points_world.shape[:-1])
    amp_sum = 0.0
    for octave in range(spec.texture_octaves):
        amp = 0.5**octave
        freq = 2.0**octave
        total += amp * _value_noise(points_world * (freq / spec.texture_scale), seed + 101 * octave)
        amp_sum += amp
    albedo = 0.15 + 0.7 * (total / amp_sum)
    if spec.flat_band_center is not None and spec.flat_band_halfwidth > 0:
        band = np.abs(points_world[..., 0] - spec.flat_band_center) < spec.flat_band_halfwidth
        albedo = np.where(band, 0.5, albedo)
    return albedo


def _intrinsics(spec: SceneSpec) -> np.ndarray:
    focal = (spec.width / 2.0) / math.tan(math.radians(spec.fov_deg) / 2.0)
    return np.array(
        [
            [focal, 0.0, (spec.width - 1) / 2.0],
            [0.0, focal, (spec.height - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )


def _camera_poses(spec: SceneSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Extrinsics for cameras on an arc, all aimed at the world origin."""
    poses = []
    span = math.radians(spec.ring_span_deg)
    for i in range(spec.views):
        angle = (i / (spec.views - 1) - 0.5) * span if spec.views > 1 else 0.0
        center = spec.ring_radius * np.array([math.sin(angle), 0.0, -math.cos(angle)])
        poses.append(look_at(center, np.zeros(3)))
    return poses


def _ray_depths(spec: SceneSpec, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Exact ray-surface depth for every pixel; dirs are unit-z camera rays in
    world coordinates, so the ray parameter equals camera depth."""
    surface_z = spec.surface_depth - spec.ring_radius
    if spec.surface == "plane":
        return _plane_depth(origin, dirs, surface_z)
    if spec.surface == "step":
        near = _plane_depth(origin, dirs, surface_z)
        far = _plane_depth(origin, dirs, surface_z + spec.step_depth_offset)
        x_near = origin[0] + near * dirs[..., 0]
        x_far = origin[0] + far * dirs[..., 0]
        depth = np.where(x_near < spec.step_split_x, near, np.inf)
        depth = np.minimum(depth, np.where(x_far >= spec.step_split_x, far, np.inf))
        riser = _riser_depth(origin, dirs, spec, surface_z)
        return np.minimum(depth, riser)
    center = np.array([0.0, 0.0, surface_z])
    backdrop_z = surface_z + 2.0 * spec.sphere_radius
    sphere = _sphere_depth(origin, dirs, center, spec.sphere_radius)
    return np.where(np.isfinite(sphere), sphere, _plane_depth(origin, dirs, backdrop_z))


def _plane_depth(origin: np.ndarray, dirs: np.ndarray, plane_z: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (plane_z - origin[2]) / dirs[..., 2]
    return np.where((dirs[..., 2] > 1e-12) & (t > 0), t, np.inf)


def _riser_depth(origin: np.ndarray, dirs: np.ndarray, spec: SceneSpec, surface_z: float) -> np.ndarray:
    """The vertical face joining the two step planes at the split line."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (spec.step_split_x - origin[0]) / dirs[..., 0]
    z_hit = origin[2] + t * dirs[..., 2]
    lo, hi = sorted((surface_z, surface_z + spec.step_depth_offset))
    ok = (np.abs(dirs[..., 0]) > 1e-12) & (t > 0) & (z_hit >= lo) & (z_hit <= hi)
    return np.where(ok, t, np.inf)


def _sphere_depth(origin: np.ndarray, dirs: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    oc = origin - center
    a = (dirs * dirs).sum(axis=-1)
    b = 2.0 * (dirs * oc).sum(axis=-1)
    c = float(oc @ oc) - radius * radius
    disc = b * b - 4 * a * c
    with np.errstate(invalid="ignore"):
        root = (-b - np.sqrt(disc)) / (2 * a)
    return np.where((disc >= 0) & (root > 0), root, np.inf)


@dataclasses.dataclass(frozen=True)
class SyntheticScene:
    """Rendered views with exact depth and the spec that produced them."""

    spec: SceneSpec
    cameras: list[CameraParams]
    images: list[np.ndarray]
    gt_depths: list[np.ndarray]

    def gt_cloud(self, min_visibility: int = 2, stride: int = 1) -> np.ndarray:
        """Back-project ground-truth depths into a surface point cloud.

        A pixel's point is kept when it is covisible: it projects inside at
        least ``min_visibility`` views in total (its own included) at a depth
        matching that view's ground truth within 1e-6 relative (occlusion
        test). ``stride`` subsamples pixels for cheaper clouds.

        Returns:
            (N, 3) float64 world points.
        """
        kept = []
        for r, cam in enumerate(self.cameras):
            depth = self.gt_depths[r][::stride, ::stride]
            h, w = depth.shape
            ys, xs = np.mgrid[0:h, 0:w]
            pixels = np.stack([xs * stride, ys * stride], axis=-1).astype(np.float64)
            world = cam.backproject(pixels, depth)
            visible = np.ones(depth.shape, dtype=np.int32)
            for k, other in enumerate(self.cameras):
                if k == r:
                    continue
                q, z = other.project(world)
                full_h, full_w = self.gt_depths[k].shape
                inside = (
                    (z > 0)
                    & (q[..., 0] >= 0)
                    & (q[..., 0] <= full_w - 1)
                    & (q[..., 1] >= 0)
                    & (q[..., 1] <= full_h - 1)
                )
                inv_gt = 1.0 / self.gt_depths[k]
                inv_seen, _ = bilinear_sample(inv_gt, np.where(inside[..., None], q, 0.0))
                unoccluded = inside & (np.abs(1.0 / np.maximum(inv_seen, 1e-300) - z) <= 1e-6 * z)
                visible += unoccluded
            kept.append(world[visible >= min_visibility])
        return np.concatenate(kept) if kept else np.zeros((0, 3))


def render_scene(spec: SceneSpec, seed: int | None = None) -> SyntheticScene:
    """Ray-cast every view of a scene; deterministic for a given (spec, seed).

    Raises:
        InputError: surface depths fall outside an explicitly given range.
    """
    seed = spec.seed if seed is None else seed
    intr = _intrinsics(spec)
    inv_k = np.linalg.inv(intr)
    poses = _camera_poses(spec)
    depths = []
    images = []
    for rotation, translation in poses:
        ys, xs = np.mgrid[0 : spec.height, 0 : spec.width]
        pix_h = np.stack([xs, ys, np.ones_like(xs)], axis=-1).astype(np.float64)
        cam_rays = pix_h @ inv_k.T
        world_dirs = cam_rays @ rotation
        origin = -rotation.T @ translation
        depth = _ray_depths(spec, origin, world_dirs)
        if not np.isfinite(depth).all():
            raise InputError("some rays miss every surface; enlarge the surface or narrow the FOV")
        points = origin + depth[..., None] * world_dirs
        images.append(np.clip(albedo_at(points, spec, seed), 0.0, 1.0))
        depths.append(depth)
    d_lo = min(float(d.min()) for d in depths)
    d_hi = max(float(d.max()) for d in depths)
    if spec.depth_min is not None and spec.depth_max is not None:
        if d_lo < spec.depth_min or d_hi > spec.depth_max:
            raise InputError(
                f"surface depths [{d_lo:.3f}, {d_hi:.3f}] fall outside the "
                f"declared range [{spec.depth_min}, {spec.depth_max}]"
            )
        depth_min, depth_max = spec.depth_min, spec.depth_max
    else:
        depth_min = d_lo * (1.0 - spec.depth_margin)
        depth_max = d_hi * (1.0 + spec.depth_margin)
    cameras = [
        CameraParams(intr, rotation, translation, depth_min, depth_max)
        for rotation, translation in poses
    ]
    return SyntheticScene(spec, cameras, images, depths)


def eval_depth(depth_map: np.ndarray, gt: np.ndarray, spacing: float) -> dict:
    """Depth-map error statistics against ground truth.

    Returns:
        dict with mean_abs, median_abs and fraction of pixels within k
        hypothesis spacings for k in {1, 2, 4}.
    """
    dm = np.asarray(depth_map, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if dm.shape != g.shape:
        raise InputError(f"shape mismatch: {dm.shape} vs {g.shape}")
    if spacing <= 0:
        raise InputError("spacing must be positive")
    err = np.abs(dm - g)
    out = {"mean_abs": float(err.mean()), "median_abs": float(np.median(err))}
    for k in (1, 2, 4):
        out[f"frac_within_{k}"] = float((err <= k * spacing).mean())
    return out


def _as_points(cloud) -> np.ndarray:
    points = getattr(cloud, "points", cloud)
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InputError(f"expected (N, 3) points, got shape {arr.shape}")
    return arr


def eval_cloud(cloud, gt_cloud, truncation: float) -> dict:
    """DTU-style point-cloud metrics with truncated nearest-neighbor distances.

    accuracy: mean distance from reconstructed points to the ground truth;
    completeness: mean distance from ground-truth samples to the
    reconstruction; overall: their arithmetic mean. Distances are clipped at
    ``truncation`` before averaging.

    Raises:
        InputError: either cloud is empty.
    """
    rec = _as_points(cloud)
    gt = _as_points(gt_cloud)
    if len(rec) == 0 or len(gt) == 0:
        raise InputError("eval_cloud needs non-empty clouds")
    if truncation <= 0:
        raise InputError("truncation must be positive")
    d_rec, _ = cKDTree(gt).query(rec)
    d_gt, _ = cKDTree(rec).query(gt)
    acc = float(np.minimum(d_rec, truncation).mean())
    comp = float(np.minimum(d_gt, truncation).mean())
    return {"accuracy": acc, "completeness": comp, "overall": 0.5 * (acc + comp)}
