"""Pinhole camera parameters and the projective maps built from them.

Conventions used throughout the package:

* Extrinsics are world-to-camera: ``x_cam = R @ x_world + t``.
* Pixel coordinates place integer values at pixel centers, x right, y down.
* Depth is the z coordinate in the camera frame, not ray length.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .errors import InputError

logger = logging.getLogger(__name__)

ROTATION_SNAP_TOL = 1e-9
ROTATION_REJECT_TOL = 1e-6


def _orthonormality_residual(rotation: np.ndarray) -> float:
    return float(np.abs(rotation @ rotation.T - np.eye(3)).max())


@dataclasses.dataclass(frozen=True)
class CameraParams:
    """Calibrated pinhole camera.

    Attributes:
        intrinsics: 3x3 upper-triangular matrix K (float64).
        rotation: 3x3 world-to-camera rotation (float64).
        translation: length-3 world-to-camera translation (float64).
        depth_min: near end of the usable depth range, scene units.
        depth_max: far end of the usable depth range, scene units.
    """

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    depth_min: float
    depth_max: float

    def __post_init__(self) -> None:
        if not (0 < self.depth_min < self.depth_max):
            raise InputError(
                f"need 0 < depth_min < depth_max, got [{self.depth_min}, {self.depth_max}]"
            )
        object.__setattr__(self, "depth_min", float(self.depth_min))
        object.__setattr__(self, "depth_max", float(self.depth_max))
        k = np.asarray(self.intrinsics, dtype=np.float64)
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if k.shape != (3, 3) or r.shape != (3, 3):
            raise InputError(f"expected 3x3 intrinsics and rotation, got {k.shape} and {r.shape}")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise InputError(f"focal lengths must be positive, got fx={k[0, 0]}, fy={k[1, 1]}")
        if np.abs(k[np.tril_indices(3, -1)]).max() > 1e-6:
            raise InputError("intrinsic matrix must be upper triangular")
        if abs(k[2, 2] - 1.0) > 1e-6:
            raise InputError(f"K[2,2] must be 1, got {k[2, 2]}")
        residual = _orthonormality_residual(r)
        if residual > ROTATION_REJECT_TOL:
            raise InputError(f"rotation is not orthonormal (residual {residual:.3e})")
        if residual > ROTATION_SNAP_TOL:
            # Mildly drifted rotations (file round-off) are re-projected onto SO(3).
            u, _, vt = np.linalg.svd(r)
            r = u @ vt
            logger.debug("snapped rotation to SO(3), residual was %.3e", residual)
        if np.linalg.det(r) < 0:
            raise InputError("rotation has negative determinant (reflection)")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, ``-R^T t``."""
        return -self.rotation.T @ self.translation

    def scaled(self, factor: float) -> "CameraParams":
        """Return a copy with intrinsics scaled for a resized image.

        Focal lengths, skew and principal point all scale by ``factor``;
        extrinsics are untouched.
        """
        k = self.intrinsics.copy()
        k[0, 0] *= factor
        k[1, 1] *= factor
        k[0, 1] *= factor
        k[0, 2] *= factor
        k[1, 2] *= factor
        return CameraParams(k, self.rotation, self.translation, self.depth_min, self.depth_max)

    def project(self, points_world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to pixels.

        Args:
            points_world: (..., 3) array.

        Returns:
            Tuple of (..., 2) pixel coordinates and (...,) depths. Pixels for
            non-positive depths are NaN.
        """
        pts = np.asarray(points_world, dtype=np.float64)
        cam = pts @ self.rotation.T + self.translation
        depth = cam[..., 2]
        hom = cam @ self.intrinsics.T
        with np.errstate(divide="ignore", invalid="ignore"):
            pix = hom[..., :2] / hom[..., 2:3]
        pix = np.where(depth[..., None] > 0, pix, np.nan)
        return pix, depth

    def backproject(self, pixels: np.ndarray, depths: np.ndarray) -> np.ndarray:
        """Lift pixels with known depth back to world coordinates.

        Args:
            pixels: (..., 2) pixel coordinates.
            depths: (...,) z depths in this camera's frame.

        Returns:
            (..., 3) world points.
        """
        pix = np.asarray(pixels, dtype=np.float64)
        d = np.asarray(depths, dtype=np.float64)
        ones = np.ones(pix.shape[:-1] + (1,), dtype=np.float64)
        hom = np.concatenate([pix, ones], axis=-1)
        rays = hom @ np.linalg.inv(self.intrinsics).T
        cam = rays * d[..., None]
        return (cam - self.translation) @ self.rotation


@dataclasses.dataclass(frozen=True)
class RelativePose:
    """Rigid transform taking reference-camera coordinates to source-camera."""

    rotation: np.ndarray
    translation: np.ndarray

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.translation))


def relative_pose(reference: CameraParams, source: CameraParams) -> RelativePose:
    """Compose the reference-to-source rigid transform from two extrinsics."""
    r_rel = source.rotation @ reference.rotation.T
    t_rel = source.translation - r_rel @ reference.translation
    return RelativePose(r_rel, t_rel)


def look_at(center: np.ndarray, target: np.ndarray, down: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Build world-to-camera extrinsics for a camera at ``center`` viewing ``target``.

    The camera z axis points from the center toward the target. ``down`` is the
    world direction that should map near the image +y axis (which points down);
    the default (0, 1, 0) makes a camera at the origin looking along world +z
    come out with identity rotation.

    Returns:
        (rotation, translation) with ``x_cam = R x_world + t``.
    """
    center = np.asarray(center, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.array([0.0, 1.0, 0.0]) if down is None else np.asarray(down, dtype=np.float64)
    forward = target - center
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise InputError("camera center and look-at target coincide")
    z = forward / norm
    x = np.cross(up, z)
    xnorm = np.linalg.norm(x)
    if xnorm < 1e-12:
        raise InputError("up vector is parallel to the viewing direction")
    x = x / xnorm
    y = np.cross(z, x)
    rotation = np.stack([x, y, z], axis=0)
    translation = -rotation @ center
    return rotation, translation
