"""Plane-sweep warps, their depth derivatives, and bilinear sampling.

For a reference pixel p at hypothesis depth d, the source-image position is

    q(d) = d * (K_src R_rel K_ref^-1 p~) + K_src t_rel,    x' = (q1/q3, q2/q3)

so each pixel's warp is affine in d before the perspective divide. The depth
derivative has the closed form dx'/dd = (a1 b3 - b1 a3, a2 b3 - b2 a3) / q3^2
with a the pixel's homography ray and b the constant offset; the numerator is
depth-independent, which the epipolar sampler exploits.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .camera import CameraParams, relative_pose
from .errors import NoParallaxError

PARALLAX_EPS = 1e-12


@dataclasses.dataclass(frozen=True)
class WarpOperator:
    """Precomposed reference-to-source warp for one view pair.

    Attributes:
        matrix: 3x3 ``K_src @ R_rel @ inv(K_ref)``.
        offset: 3-vector ``K_src @ t_rel``.
    """

    matrix: np.ndarray
    offset: np.ndarray

    @classmethod
    def between(cls, reference: CameraParams, source: CameraParams) -> "WarpOperator":
        pose = relative_pose(reference, source)
        matrix = source.intrinsics @ pose.rotation @ np.linalg.inv(reference.intrinsics)
        offset = source.intrinsics @ pose.translation
        return cls(matrix, offset)

    def rays(self, pixels: np.ndarray) -> np.ndarray:
        """Map pixels to their homography rays ``a = matrix @ p~``, shape (..., 3)."""
        pix = np.asarray(pixels, dtype=np.float64)
        ones = np.ones(pix.shape[:-1] + (1,), dtype=np.float64)
        return np.concatenate([pix, ones], axis=-1) @ self.matrix.T

    def warp(self, pixels: np.ndarray, depths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Warp pixels at given depths into the source image.

        Args:
            pixels: (..., 2) reference pixel coordinates.
            depths: broadcastable to (...,), hypothesis depths.

        Returns:
            (..., 2) source coordinates and a (...,) bool mask, False where the
            warped point lies behind the source camera. Coordinates may fall
            outside the source bounds; samplers mask those separately.
        """
        return self.warp_rays(self.rays(pixels), depths)

    def warp_rays(self, rays: np.ndarray, depths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Same as warp but from precomputed rays, for per-depth-plane loops."""
        d = np.asarray(depths, dtype=np.float64)
        q = d[..., None] * rays + self.offset
        in_front = q[..., 2] > PARALLAX_EPS
        denom = np.where(in_front, q[..., 2], 1.0)
        coords = q[..., :2] / denom[..., None]
        return coords, in_front

    def depth_jacobian(self, pixels: np.ndarray, depths: np.ndarray) -> np.ndarray:
        """Derivative of the warped position w.r.t. depth, shape (..., 2)."""
        rays = self.rays(pixels)
        d = np.asarray(depths, dtype=np.float64)
        q3 = d * rays[..., 2] + self.offset[2]
        numer_x = rays[..., 0] * self.offset[2] - self.offset[0] * rays[..., 2]
        numer_y = rays[..., 1] * self.offset[2] - self.offset[1] * rays[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            jac = np.stack([numer_x, numer_y], axis=-1) / (q3 * q3)[..., None]
        return jac


def warp_pixel(
    pixel: np.ndarray, depth: float, reference: CameraParams, source: CameraParams
) -> tuple[np.ndarray, bool]:
    """Warp a single reference pixel to the source view at one depth.

    Returns:
        (source pixel coords, valid flag); valid is False when the warped
        point lies behind the source camera.
    """
    coords, in_front = WarpOperator.between(reference, source).warp(
        np.asarray(pixel, dtype=np.float64), np.float64(depth)
    )
    return coords, bool(in_front)


def depth_step_map(
    op: WarpOperator, pixels: np.ndarray, depths: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Depth change per one pixel of epipolar motion, vectorized.

    Returns:
        (step, valid): step has the shape of ``depths``; valid is False where
        the warp moves less than PARALLAX_EPS pixels per depth unit (no
        parallax) or the point sits behind the source camera.
    """
    jac = op.depth_jacobian(pixels, depths)
    speed = np.linalg.norm(jac, axis=-1)
    d = np.asarray(depths, dtype=np.float64)
    rays = op.rays(pixels)
    in_front = d * rays[..., 2] + op.offset[2] > PARALLAX_EPS
    valid = (speed > PARALLAX_EPS) & in_front
    with np.errstate(divide="ignore"):
        step = np.where(valid, 1.0 / np.where(valid, speed, 1.0), np.inf)
    return step, valid


def depth_per_pixel_step(
    pixel: np.ndarray, depth: float, reference: CameraParams, source: CameraParams
) -> float:
    """Scalar depth delta corresponding to one pixel along the epipolar line.

    Raises:
        NoParallaxError: the pair's epipolar geometry is degenerate at this
            pixel (zero baseline or motion parallel to the viewing ray).
    """
    op = WarpOperator.between(reference, source)
    step, valid = depth_step_map(op, np.asarray(pixel, dtype=np.float64), np.float64(depth))
    if not bool(valid):
        raise NoParallaxError("depth changes do not move this pixel in the source view")
    return float(step)


def bilinear_sample(image: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample an image at continuous pixel coordinates.

    Args:
        image: (H, W) or (H, W, C) array.
        coords: (..., 2) (x, y) positions; integers land on pixel centers.

    Returns:
        (values, valid): values has shape (...) or (..., C) with zeros where
        invalid; valid is True only for coords inside [0, W-1] x [0, H-1].
    """
    img = np.asarray(image)
    h, w = img.shape[:2]
    xy = np.asarray(coords, dtype=np.float64)
    x, y = xy[..., 0], xy[..., 1]
    valid = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xs = np.where(valid, x, 0.0)
    ys = np.where(valid, y, 0.0)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, max(h - 2, 0))
    fx = (xs - x0)[..., None] if img.ndim == 3 else xs - x0
    fy = (ys - y0)[..., None] if img.ndim == 3 else ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 * (1 - fx) + v01 * fx
    bottom = v10 * (1 - fx) + v11 * fx
    values = top * (1 - fy) + bottom * fy
    if img.ndim == 3:
        values = np.where(valid[..., None], values, 0.0)
    else:
        values = np.where(valid, values, 0.0)
    return values, valid
