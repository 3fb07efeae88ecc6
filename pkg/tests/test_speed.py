"""Tests for the clipped speed model, gates, scheduling, and pose sampling."""

import numpy as np
import pytest

from EikoPlan.errors import InvalidInput, SceneTooCluttered, UnknownObject
from EikoPlan.geom import Bounds, PointCloud, Pose, Scene, min_obstacle_distance, transform_cloud
from EikoPlan.speed import (
    AlwaysReachable,
    CustomReachability,
    SpeedParams,
    SphericalShell,
    ground_truth_speed,
    reachability_from_dict,
    sample_valid_pose,
    scheduled_speed,
    speed_from_distance,
)

PARAMS = SpeedParams()


@pytest.mark.parametrize(
    "distance, gate, expected",
    [
        (0.5, 1, 1.0),
        (0.5, 0, 0.05 / 0.3),
        (0.15, 1, 0.5),
        (0.0, 1, 0.05 / 0.3),
    ],
)
def test_speed_from_distance(distance, gate, expected):
    assert speed_from_distance(distance, gate, PARAMS) == pytest.approx(expected, abs=1e-12)


def test_ground_truth_speed_examples(point_scene):
    # obstacle point is 1 m above the object
    assert ground_truth_speed(point_scene, "dot", Pose()) == 1.0
    mid = Pose((0.0, 0.0, 0.85))
    assert ground_truth_speed(point_scene, "dot", mid) == pytest.approx(0.5)
    blocked = CustomReachability(lambda pose: False)
    assert ground_truth_speed(point_scene, "dot", Pose(), reach=blocked) == pytest.approx(PARAMS.min_speed)
    with pytest.raises(UnknownObject):
        ground_truth_speed(point_scene, "nothing", Pose())


def test_speed_is_monotone_in_distance():
    distances = np.linspace(0.0, 0.6, 61)
    speeds = [speed_from_distance(d, 1, PARAMS) for d in distances]
    assert all(b >= a for a, b in zip(speeds[:-1], speeds[1:]))


def test_gate_forces_lower_clip_for_any_distance():
    for d in (0.0, 0.07, 0.2, 5.0):
        assert speed_from_distance(d, 0, PARAMS) == PARAMS.min_speed


def test_speed_scales_with_s_const(point_scene):
    doubled = SpeedParams(s_const=2.0)
    for z in (0.0, 0.8, 0.9, 0.97):
        pose = Pose((0.0, 0.0, z))
        base = ground_truth_speed(point_scene, "dot", pose)
        assert ground_truth_speed(point_scene, "dot", pose, doubled) == pytest.approx(2 * base)


def test_speed_params_validation():
    with pytest.raises(InvalidInput):
        SpeedParams(d_min=0.3, d_max=0.3)
    with pytest.raises(InvalidInput):
        SpeedParams(s_const=0.0)
    with pytest.raises(InvalidInput):
        SpeedParams(alpha=1.2)
    assert SpeedParams.from_dict(PARAMS.to_dict()) == PARAMS


@pytest.mark.parametrize(
    "s_star, alpha, expected",
    [(0.3, 0.0, 1.0), (0.5, 1.0, 0.5), (0.2, 0.5, 0.6)],
)
def test_scheduled_speed_examples(s_star, alpha, expected):
    assert scheduled_speed(s_star, alpha) == pytest.approx(expected)


def test_scheduled_speed_properties():
    s = np.array([0.2, 0.5, 1.0])
    np.testing.assert_array_equal(scheduled_speed(s, 0.0), np.ones(3))
    np.testing.assert_array_equal(scheduled_speed(s, 1.0), s)
    over = scheduled_speed(s, 1.05)
    assert np.all(over > 0) and np.all(over <= 1.0)
    with pytest.raises(InvalidInput):
        scheduled_speed(0.5, 1.5)
    with pytest.raises(InvalidInput):
        scheduled_speed(0.0, 0.5)


def test_spherical_shell_gate():
    shell = SphericalShell((0.0, 0.0, 0.0), 0.15, 0.9)
    assert shell(Pose((0.5, 0.0, 0.0))) == 1
    assert shell(Pose((0.1, 0.0, 0.0))) == 0
    assert shell(Pose((1.0, 0.0, 0.0))) == 0
    assert reachability_from_dict(shell.to_dict()) == shell
    assert isinstance(reachability_from_dict({"kind": "always_reachable"}), AlwaysReachable)
    with pytest.raises(InvalidInput):
        SphericalShell(r_inner=1.0, r_outer=0.5)
    with pytest.raises(InvalidInput):
        reachability_from_dict({"kind": "custom"})


def test_first_sample_accepted_without_obstacles(free_scene):
    sampled = sample_valid_pose(free_scene, "box", rng=0, mode="2d")
    assert sampled.rejections == 0
    assert sampled.pose.translation[2] == 0.0
    assert sampled.pose.rotation == (0.0, 0.0, 0.0)


def test_planar_yaw_mode(free_scene):
    pose = sample_valid_pose(free_scene, "box", rng=1, mode="3d").pose
    assert pose.rotation[:2] == (0.0, 0.0)
    with pytest.raises(InvalidInput):
        sample_valid_pose(free_scene, "box", rng=1, mode="4d")


def test_too_cluttered_scene():
    obstacles = PointCloud([[0.0, 0.0, 0.0]])
    scene = Scene(Bounds(), {"dot": PointCloud([[0.0, 0.0, 0.0]])}, obstacles)
    with pytest.raises(SceneTooCluttered) as info:
        sample_valid_pose(scene, "dot", rng=0, max_rejections=25)
    assert info.value.rejections == 25


def test_sampled_poses_are_collision_free():
    from EikoPlan.environments import build_scene, get_env

    scene = build_scene(get_env("tabletop_center_obstacle"))
    rng = np.random.default_rng(11)
    cloud = scene.object_cloud("box")
    for _ in range(100):
        pose = sample_valid_pose(scene, "box", rng).pose
        distance = min_obstacle_distance(scene, transform_cloud(cloud, pose)).distance
        assert distance > scene.contact_tolerance
        assert scene.bounds.contains(pose.translation)
