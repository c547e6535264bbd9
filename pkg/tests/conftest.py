"""Shared fixtures: canned cameras, a rectified pair, session-scoped scenes."""

import numpy as np
import pytest

from pyramvs.camera import CameraParams
from pyramvs.synth import SceneSpec, render_scene


def _make_camera(
    fx=100.0,
    fy=100.0,
    cx=64.0,
    cy=48.0,
    rotation=None,
    center=None,
    depth_min=1.0,
    depth_max=1000.0,
):
    """Camera from a world-space center (translation derived as -R c)."""
    intrinsics = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    c = np.zeros(3) if center is None else np.asarray(center, dtype=np.float64)
    return CameraParams(intrinsics, r, -r @ c, depth_min, depth_max)


@pytest.fixture
def make_camera():
    return _make_camera


@pytest.fixture
def identity_camera():
    return _make_camera()


@pytest.fixture
def rectified_pair():
    """Reference at the origin plus a source shifted 1 unit along +x."""
    return _make_camera(), _make_camera(center=(1.0, 0.0, 0.0))


@pytest.fixture(scope="session")
def plane_scene():
    return render_scene(SceneSpec(surface="plane"))


@pytest.fixture(scope="session")
def step_scene():
    return render_scene(SceneSpec(surface="step"))


@pytest.fixture(scope="session")
def small_plane_scene():
    return render_scene(SceneSpec(surface="plane", width=128, height=96))


@pytest.fixture(scope="session")
def small_sphere_scene():
    return render_scene(SceneSpec(surface="sphere", width=128, height=96))
