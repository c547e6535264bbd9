"""File formats: PFM depth maps, 8-bit images, and DTU-style camera text files.

PFM stores float32 samples bottom-up with the endianness encoded in the sign
of the scale line; we always write little-endian ("-1.0"). Camera files hold a
4x4 world-to-camera extrinsic, a 3x3 intrinsic, and a depth line of two to
four numbers (min, interval, optional plane count, optional max).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .camera import CameraParams
from .errors import InputError

logger = logging.getLogger(__name__)

DTU_DEFAULT_PLANES = 192


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file into a top-down float32 array.

    Returns:
        (H, W) array for "Pf" files, (H, W, 3) for "PF".

    Raises:
        InputError: malformed header, truncated payload, or NaN samples.
    """
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4:
        raise InputError(f"{path}: malformed PFM header")
    magic, dims, scale_text, payload = parts
    if magic not in (b"Pf", b"PF"):
        raise InputError(f"{path}: expected PFM magic 'Pf' or 'PF', got {magic!r}")
    channels = 1 if magic == b"Pf" else 3
    try:
        width, height = (int(tok) for tok in dims.split())
        scale = float(scale_text)
    except ValueError as exc:
        raise InputError(f"{path}: malformed PFM header: {exc}") from exc
    if width <= 0 or height <= 0:
        raise InputError(f"{path}: bad PFM dimensions {width}x{height}")
    if scale == 0:
        raise InputError(f"{path}: PFM scale must be nonzero")
    count = width * height * channels
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    if len(payload) < count * 4:
        raise InputError(f"{path}: truncated PFM payload ({len(payload)} bytes, need {count * 4})")
    samples = np.frombuffer(payload[: count * 4], dtype=dtype).astype(np.float32)
    if np.isnan(samples).any():
        raise InputError(f"{path}: PFM contains NaN samples")
    shape = (height, width) if channels == 1 else (height, width, 3)
    # PFM rows are stored bottom-up.
    return samples.reshape(shape)[::-1].copy()


def write_pfm(path: str | Path, samples: np.ndarray) -> None:
    """Write a float array as little-endian PFM (scale line "-1.0")."""
    arr = np.asarray(samples)
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise InputError(f"expected (H, W) or (H, W, 3) samples, got shape {arr.shape}")
    if np.isnan(arr).any():
        raise InputError("refusing to write NaN samples to PFM")
    arr = arr.astype("<f4")
    header = b"%s\n%d %d\n-1.0\n" % (magic, arr.shape[1], arr.shape[0])
    Path(path).write_bytes(header + arr[::-1].tobytes())


def read_image_8bit(path: str | Path) -> np.ndarray:
    """Read a PGM/PNG (or any 8-bit Pillow-readable) image as float64 in [0, 1].

    Returns:
        (H, W) for grayscale files, (H, W, 3) for color.
    """
    with PILImage.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if ("A" in img.mode or len(img.mode) > 2) else "L")
        arr = np.asarray(img, dtype=np.float64)
    return arr / 255.0


def write_image_8bit(path: str | Path, pixels: np.ndarray) -> None:
    """Write float [0, 1] pixels as an 8-bit PGM/PNG (format from suffix)."""
    arr = np.asarray(pixels, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise InputError("refusing to write non-finite pixels")
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(quantized).save(path)


def _format_matrix(matrix: np.ndarray) -> str:
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in matrix)


def read_camera_dtu(path: str | Path) -> CameraParams:
    """Parse a DTU-style camera text file.

    Layout: an ``extrinsic`` keyword followed by a 4x4 world-to-camera matrix,
    an ``intrinsic`` keyword followed by a 3x3 matrix, then a depth line of
    2-4 numbers: min and interval, optionally plane count and explicit max.
    With 2 numbers depth_max = min + interval * 191; with 3, min + interval *
    (planes - 1); with 4 the explicit max is used and checked against the
    plane-count formula.

    Raises:
        InputError: layout violations, non-orthonormal rotation beyond 1e-6,
            non-positive or inconsistent depth range.
    """
    tokens = Path(path).read_text().split()
    lowered = [t.lower() for t in tokens]
    try:
        ext_at = lowered.index("extrinsic")
        int_at = lowered.index("intrinsic")
    except ValueError as exc:
        raise InputError(f"{path}: missing 'extrinsic'/'intrinsic' keyword") from exc
    if int_at < ext_at:
        raise InputError(f"{path}: 'extrinsic' block must precede 'intrinsic'")
    try:
        ext_vals = [float(t) for t in tokens[ext_at + 1 : ext_at + 17]]
        int_vals = [float(t) for t in tokens[int_at + 1 : int_at + 10]]
        depth_vals = [float(t) for t in tokens[int_at + 10 :]]
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric value: {exc}") from exc
    if len(ext_vals) != 16 or len(int_vals) != 9:
        raise InputError(f"{path}: expected 4x4 extrinsic and 3x3 intrinsic blocks")
    extrinsic = np.array(ext_vals, dtype=np.float64).reshape(4, 4)
    if np.abs(extrinsic[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 1e-9:
        raise InputError(f"{path}: extrinsic bottom row must be 0 0 0 1")
    intrinsics = np.array(int_vals, dtype=np.float64).reshape(3, 3)
    if not 2 <= len(depth_vals) <= 4:
        raise InputError(f"{path}: depth line needs 2-4 numbers, got {len(depth_vals)}")
    depth_min, interval = depth_vals[0], depth_vals[1]
    if len(depth_vals) == 2:
        depth_max = depth_min + interval * (DTU_DEFAULT_PLANES - 1)
    elif len(depth_vals) == 3:
        depth_max = depth_min + interval * (depth_vals[2] - 1)
    else:
        depth_max = depth_vals[3]
        implied = depth_min + interval * (depth_vals[2] - 1)
        if abs(implied - depth_max) > 1e-6 * max(1.0, abs(depth_max)):
            raise InputError(
                f"{path}: depth line inconsistent (max {depth_max} vs implied {implied})"
            )
    if not 0 < depth_min < depth_max:
        raise InputError(f"{path}: bad depth range [{depth_min}, {depth_max}]")
    return CameraParams(intrinsics, extrinsic[:3, :3], extrinsic[:3, 3], depth_min, depth_max)


def write_camera_dtu(path: str | Path, camera: CameraParams) -> None:
    """Write a camera in the text layout read_camera_dtu accepts.

    The depth line carries all four numbers with the standard 192-plane count,
    so the explicit max round-trips bit-exactly.
    """
    extrinsic = np.eye(4)
    extrinsic[:3, :3] = camera.rotation
    extrinsic[:3, 3] = camera.translation
    interval = (camera.depth_max - camera.depth_min) / (DTU_DEFAULT_PLANES - 1)
    text = "extrinsic\n{}\n\nintrinsic\n{}\n\n{} {} {} {}\n".format(
        _format_matrix(extrinsic),
        _format_matrix(camera.intrinsics),
        repr(camera.depth_min),
        repr(interval),
        DTU_DEFAULT_PLANES,
        repr(camera.depth_max),
    )
    Path(path).write_text(text)
