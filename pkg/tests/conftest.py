"""Shared fixtures."""

import numpy as np
import pytest

from EikoPlan.environments import object_cloud
from EikoPlan.geom import Bounds, PointCloud, Scene
from EikoPlan.net import NetConfig, TimeFieldModel

TINY = dict(
    fourier_features=8,
    pose_hidden=16,
    pose_latent=16,
    shape_hidden=8,
    shape_latent=8,
    hidden=16,
    residual_blocks=1,
)


@pytest.fixture
def box_cloud():
    return object_cloud("box")


@pytest.fixture
def point_scene():
    """One-point object, one obstacle point at (0, 0, 1)."""
    return Scene(
        bounds=Bounds((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)),
        objects={"dot": PointCloud([[0.0, 0.0, 0.0]])},
        obstacle_cloud=PointCloud([[0.0, 0.0, 1.0]]),
        name="point",
    )


@pytest.fixture
def free_scene(box_cloud):
    """Obstacle-free planar workspace with the catalog box."""
    return Scene(
        bounds=Bounds((-0.5, -0.5, 0.0), (0.5, 0.5, 0.0)),
        objects={"box": box_cloud},
        obstacle_cloud=PointCloud(np.zeros((0, 3))),
        name="free",
    )


@pytest.fixture
def tiny_config():
    return NetConfig(**TINY)


@pytest.fixture
def tiny_model(tiny_config):
    return TimeFieldModel(tiny_config)
