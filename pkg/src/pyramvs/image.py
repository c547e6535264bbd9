"""Image container, grayscale conversion and the resolution pyramid.

The matcher runs coarse-to-fine, so every input image is cropped to a size
divisible by ``2**(levels - 1)`` and downsampled by exact 2x2 box averaging.
Box averaging keeps the pyramid reproducible to the last bit, which the
determinism guarantees elsewhere rely on.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .camera import CameraParams
from .errors import InputError

# ITU-R BT.601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def to_grayscale(pixels: np.ndarray) -> np.ndarray:
    """Collapse an (H, W) or (H, W, 3) array in [0, 1] to single-channel float64."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr @ _LUMA
    if arr.ndim == 3 and arr.shape[2] == 1:
        return arr[:, :, 0]
    raise InputError(f"expected (H, W) or (H, W, 3) image, got shape {arr.shape}")


def crop_to_multiple(pixels: np.ndarray, multiple: int) -> np.ndarray:
    """Crop an image so height and width are divisible by ``multiple``.

    The top-left corner is kept, so the principal point is unchanged.
    """
    if multiple < 1:
        raise InputError(f"multiple must be >= 1, got {multiple}")
    h, w = pixels.shape[:2]
    new_h = (h // multiple) * multiple
    new_w = (w // multiple) * multiple
    if new_h == 0 or new_w == 0:
        raise InputError(f"image {h}x{w} is smaller than the required multiple {multiple}")
    return pixels[:new_h, :new_w]


def downsample_2x(pixels: np.ndarray) -> np.ndarray:
    """Halve resolution by averaging disjoint 2x2 blocks.

    Height and width must be even.
    """
    h, w = pixels.shape[:2]
    if h % 2 or w % 2:
        raise InputError(f"downsample_2x needs even dimensions, got {h}x{w}")
    trailing = pixels.shape[2:]
    blocks = pixels.reshape((h // 2, 2, w // 2, 2) + trailing)
    return blocks.mean(axis=(1, 3))


@dataclasses.dataclass(frozen=True)
class PyramidLevel:
    """One resolution level: grayscale image plus the camera rescaled to match."""

    pixels: np.ndarray
    camera: CameraParams

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


def build_pyramid(pixels: np.ndarray, camera: CameraParams, levels: int) -> list[PyramidLevel]:
    """Build a coarse-to-fine pyramid of grayscale levels with matched intrinsics.

    Args:
        pixels: (H, W) or (H, W, 3) image with values in [0, 1].
        camera: camera calibrated for the full-resolution image.
        levels: number of pyramid levels, >= 1.

    Returns:
        List of ``levels`` entries ordered coarsest first; the last entry is the
        (cropped) full-resolution image. Intrinsics are halved per level down.
    """
    if levels < 2:
        raise InputError(f"levels must be >= 2, got {levels}")
    gray = to_grayscale(pixels)
    if gray.min() < -1e-9 or gray.max() > 1 + 1e-9:
        raise InputError("image values must lie in [0, 1]")
    gray = crop_to_multiple(gray, 2 ** (levels - 1))
    scale = 2 ** (levels - 1)
    if min(gray.shape[0] // scale, gray.shape[1] // scale) < 8:
        raise InputError(
            f"image {gray.shape[0]}x{gray.shape[1]} leaves a coarsest side below 8 at {levels} levels"
        )
    out = [PyramidLevel(gray, camera)]
    for _ in range(levels - 1):
        prev = out[0]
        out.insert(0, PyramidLevel(downsample_2x(prev.pixels), prev.camera.scaled(0.5)))
    return out
