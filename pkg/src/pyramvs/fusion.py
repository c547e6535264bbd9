"""Cross-view consistency filtering and fusion into a colored point cloud.

A reference pixel survives when enough source views agree with it under a
round-trip test: back-project, land in the source, re-project the source's
own depth back, and compare both the pixel position and the relative depth.
Source depths are sampled bilinearly in inverse depth, which is affine in
pixel coordinates on planar surfaces, so clean synthetic inputs round-trip
to machine precision.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

import numpy as np

from .camera import CameraParams
from .errors import InputError
from .geometry import bilinear_sample

logger = logging.getLogger(__name__)

_PLY_DTYPE = np.dtype(
    [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")]
)
_INDICATOR_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class ConsistencyResult:
    """Per-pixel outcome of the round-trip test for one reference view.

    Attributes:
        support: (H, W) int32 count of agreeing source views.
        fused_depth: (H, W) float64 mean of the agreeing depth estimates,
            including the reference's own.
    """

    support: np.ndarray
    fused_depth: np.ndarray


def consistency_check(
    ref_depth: np.ndarray,
    src_depths: list[np.ndarray],
    ref_cam: CameraParams,
    src_cams: list[CameraParams],
    tau_px: float,
    tau_rel: float,
) -> ConsistencyResult:
    """Count source views agreeing with each reference pixel's depth.

    A source supports pixel p at depth d when p's 3D point projects into the
    source at q with positive depth, the source's depth at q back-projects
    and re-projects into the reference within ``tau_px`` pixels of p, and the
    round-trip depth is within relative ``tau_rel`` of d. Pixels with
    non-positive reference depth get support 0.
    """
    if tau_px <= 0 or tau_rel <= 0:
        raise InputError("consistency thresholds must be positive")
    if len(src_depths) != len(src_cams):
        raise InputError("need one camera per source depth map")
    d_ref = np.asarray(ref_depth, dtype=np.float64)
    h, w = d_ref.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pixels = np.stack([xs, ys], axis=-1).astype(np.float64)
    ref_ok = d_ref > 0
    world = ref_cam.backproject(pixels, np.where(ref_ok, d_ref, 1.0))
    support = np.zeros((h, w), dtype=np.int32)
    depth_sum = np.where(ref_ok, d_ref, 0.0)
    for d_src, cam in zip(src_depths, src_cams):
        d_s = np.asarray(d_src, dtype=np.float64)
        src_valid = d_s > 0
        inv = np.where(src_valid, 1.0 / np.where(src_valid, d_s, 1.0), 0.0)
        q, z_src = cam.project(world)
        front = ref_ok & (z_src > 0)
        q_safe = np.where(front[..., None], q, 0.0)
        inv_sampled, in_bounds = bilinear_sample(inv, q_safe)
        indicator, _ = bilinear_sample(src_valid.astype(np.float64), q_safe)
        usable = front & in_bounds & (indicator >= 1.0 - _INDICATOR_TOL) & (inv_sampled > 0)
        d_sampled = np.where(usable, 1.0 / np.where(usable, inv_sampled, 1.0), 0.0)
        world_back = cam.backproject(q_safe, d_sampled)
        p_back, d_back = ref_cam.project(world_back)
        usable &= d_back > 0
        err_px = np.linalg.norm(np.where(usable[..., None], p_back - pixels, 0.0), axis=-1)
        err_rel = np.where(usable, np.abs(d_back - d_ref) / np.where(ref_ok, d_ref, 1.0), np.inf)
        agrees = usable & (err_px < tau_px) & (err_rel < tau_rel)
        support += agrees
        depth_sum += np.where(agrees, d_back, 0.0)
    fused = np.where(ref_ok, depth_sum / np.maximum(support + 1, 1), 0.0)
    return ConsistencyResult(support, fused)


@dataclasses.dataclass(frozen=True)
class FusedPointCloud:
    """Fused scene points with color and their supporting view counts.

    Attributes:
        points: (N, 3) float64 world coordinates.
        colors: (N, 3) uint8.
        support: (N,) int32.
    """

    points: np.ndarray
    colors: np.ndarray
    support: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]


def _image_colors(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None].repeat(3, axis=2)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def voxel_deduplicate(cloud: FusedPointCloud, voxel_size: float) -> FusedPointCloud:
    """Collapse points sharing a voxel: last writer keeps position and color,
    support counts are summed. Output is sorted by voxel key, so the result
    is deterministic and idempotent."""
    if voxel_size <= 0 or len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel_size).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    support = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(support, inverse, cloud.support)
    last = np.full(len(uniq), -1, dtype=np.int64)
    np.maximum.at(last, inverse, np.arange(len(cloud), dtype=np.int64))
    return FusedPointCloud(
        cloud.points[last], cloud.colors[last], support.astype(np.int32)
    )


def fuse(
    depth_maps: list[np.ndarray],
    cameras: list[CameraParams],
    images: list[np.ndarray],
    min_support: int = 2,
    tau_px: float = 1.0,
    tau_rel: float = 0.01,
    voxel_size: float = 0.0,
) -> FusedPointCloud:
    """Fuse per-view depth maps into one consistency-filtered point cloud.

    Every view takes a turn as reference; its pixels with at least
    ``min_support`` agreeing other views are back-projected at the averaged
    round-trip depth. ``voxel_size`` > 0 enables duplicate suppression.
    """
    n = len(depth_maps)
    if not (n == len(cameras) == len(images)):
        raise InputError("depth_maps, cameras and images must have equal length")
    if n < 2:
        raise InputError("fusion needs at least 2 views")
    if min_support < 1:
        raise InputError("min_support must be >= 1")
    all_points = []
    all_colors = []
    all_support = []
    for r in range(n):
        others = [k for k in range(n) if k != r]
        result = consistency_check(
            depth_maps[r],
            [depth_maps[k] for k in others],
            cameras[r],
            [cameras[k] for k in others],
            tau_px,
            tau_rel,
        )
        keep = result.support >= min_support
        if not keep.any():
            continue
        h, w = depth_maps[r].shape
        ys, xs = np.mgrid[0:h, 0:w]
        pixels = np.stack([xs[keep], ys[keep]], axis=-1).astype(np.float64)
        points = cameras[r].backproject(pixels, result.fused_depth[keep])
        colors = _image_colors(images[r])[keep]
        all_points.append(points)
        all_colors.append(colors)
        all_support.append(result.support[keep])
    if not all_points:
        logger.warning("fusion produced an empty cloud (no pixel reached min_support=%d)", min_support)
        return FusedPointCloud(
            np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8), np.zeros(0, dtype=np.int32)
        )
    cloud = FusedPointCloud(
        np.concatenate(all_points), np.concatenate(all_colors), np.concatenate(all_support)
    )
    return voxel_deduplicate(cloud, voxel_size)


def write_ply(path: str | Path, cloud: FusedPointCloud) -> None:
    """Write a binary little-endian PLY with x y z float32, red green blue uint8."""
    n = len(cloud)
    record = np.zeros(n, dtype=_PLY_DTYPE)
    record["x"] = cloud.points[:, 0].astype("<f4")
    record["y"] = cloud.points[:, 1].astype("<f4")
    record["z"] = cloud.points[:, 2].astype("<f4")
    record["red"] = cloud.colors[:, 0]
    record["green"] = cloud.colors[:, 1]
    record["blue"] = cloud.colors[:, 2]
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    Path(path).write_bytes(header.encode("ascii") + record.tobytes())


def read_ply(path: str | Path) -> FusedPointCloud:
    """Read a PLY written by write_ply. Support counts are not stored in the
    file and come back as 1."""
    data = Path(path).read_bytes()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise InputError(f"{path}: not a PLY file")
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()
    if "format binary_little_endian 1.0" not in header_lines:
        raise InputError(f"{path}: expected binary little-endian PLY")
    count = None
    props = []
    for line in header_lines:
        if line.startswith("element vertex"):
            count = int(line.split()[-1])
        elif line.startswith("property"):
            props.append(tuple(line.split()[1:]))
    expected = [
        ("float", "x"), ("float", "y"), ("float", "z"),
        ("uchar", "red"), ("uchar", "green"), ("uchar", "blue"),
    ]
    if count is None or props != expected:
        raise InputError(f"{path}: unsupported PLY layout")
    payload = data[end + len(b"end_header\n") :]
    if len(payload) < count * _PLY_DTYPE.itemsize:
        raise InputError(f"{path}: truncated PLY payload")
    record = np.frombuffer(payload[: count * _PLY_DTYPE.itemsize], dtype=_PLY_DTYPE)
    points = np.stack([record["x"], record["y"], record["z"]], axis=-1).astype(np.float64)
    colors = np.stack([record["red"], record["green"], record["blue"]], axis=-1)
    return FusedPointCloud(points, colors, np.ones(count, dtype=np.int32))
