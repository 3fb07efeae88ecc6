"""Tests for pose algebra, clouds, and distance queries."""

import math

import numpy as np
import pytest

from EikoPlan.errors import (
    EmptyCloud,
    FileFormatError,
    InsufficientPoints,
    InvalidInput,
    MissingObstacles,
    UnknownObject,
)
from EikoPlan.geom import (
    Bounds,
    DistanceGrid,
    PointCloud,
    Pose,
    Scene,
    angular_distance,
    densify,
    farthest_point_indices,
    farthest_point_sample,
    interpolate_pose,
    load_cloud,
    min_obstacle_distance,
    pose_distance,
    save_cloud,
    transform_cloud,
    wrap_angle,
    wrap_angles,
)


@pytest.mark.parametrize(
    "angle, expected",
    [
        (0.0, 0.0),
        (math.pi, math.pi),
        (-math.pi, math.pi),
        (3 * math.pi / 2, -math.pi / 2),
        (-3 * math.pi / 2, math.pi / 2),
        (0.3, 0.3),
    ],
)
def test_wrap_angle(angle, expected):
    assert wrap_angle(angle) == pytest.approx(expected, abs=1e-12)
    assert wrap_angles(np.array([angle]))[0] == pytest.approx(expected, abs=1e-12)


def test_pose_rotation_always_wrapped():
    pose = Pose((0, 0, 0), (7.0, -7.0, 4.0))
    assert all(-math.pi < a <= math.pi for a in pose.rotation)
    with pytest.raises(InvalidInput):
        Pose((0, math.nan, 0))
    with pytest.raises(InvalidInput):
        Pose.from_vector([1, 2, 3])


def test_planar_pose_is_zero_padded():
    pose = Pose.planar(0.1, 0.2, 0.3)
    assert pose.as_vector().tolist() == [0.1, 0.2, 0.0, 0.0, 0.0, 0.3]


def test_transform_cloud_examples():
    cloud = PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    assert transform_cloud(cloud, Pose()).allclose(cloud)
    moved = transform_cloud(PointCloud([[0.0, 0.0, 0.0]]), Pose((1, 0, 0)))
    np.testing.assert_allclose(moved.points, [[1.0, 0.0, 0.0]])
    turned = transform_cloud(PointCloud([[1.0, 0.0, 0.0]]), Pose((0, 0, 0), (0, 0, math.pi / 2)))
    np.testing.assert_allclose(turned.points, [[0.0, 1.0, 0.0]], atol=1e-9)
    with pytest.raises(EmptyCloud):
        transform_cloud(PointCloud(np.zeros((0, 3))), Pose())


def test_euler_convention_is_intrinsic_zyx():
    roll, pitch, yaw = 0.3, -0.4, 1.1
    rx = np.array([[1, 0, 0], [0, math.cos(roll), -math.sin(roll)], [0, math.sin(roll), math.cos(roll)]])
    ry = np.array([[math.cos(pitch), 0, math.sin(pitch)], [0, 1, 0], [-math.sin(pitch), 0, math.cos(pitch)]])
    rz = np.array([[math.cos(yaw), -math.sin(yaw), 0], [math.sin(yaw), math.cos(yaw), 0], [0, 0, 1]])
    pose = Pose((0, 0, 0), (roll, pitch, yaw))
    np.testing.assert_allclose(pose.rotation_matrix(), rz @ ry @ rx, atol=1e-12)


def test_transform_inverse_round_trip():
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.uniform(-1, 1, size=(20, 3)))
    for _ in range(10):
        pose = Pose(tuple(rng.uniform(-1, 1, 3)), tuple(rng.uniform(-1.5, 1.5, 3)))
        back = transform_cloud(transform_cloud(cloud, pose), pose.inverse())
        np.testing.assert_allclose(back.points, cloud.points, atol=1e-9)


def test_compose_matches_sequential_transforms():
    a = Pose((0.1, 0.2, 0.3), (0.2, -0.1, 0.5))
    b = Pose((-0.3, 0.0, 0.1), (0.0, 0.4, -0.2))
    cloud = PointCloud([[0.1, 0.0, 0.0], [0.0, 0.2, 0.3]])
    direct = transform_cloud(cloud, a.compose(b))
    sequential = transform_cloud(transform_cloud(cloud, b), a)
    np.testing.assert_allclose(direct.points, sequential.points, atol=1e-12)


def test_min_obstacle_distance_examples(point_scene):
    assert min_obstacle_distance(point_scene, PointCloud([[0.0, 0.0, 0.0]])).distance == 1.0
    assert min_obstacle_distance(point_scene, PointCloud([[0.0, 0.0, 1.0]])).distance == 0.0
    empty = Scene(Bounds(), {}, None)
    with pytest.raises(MissingObstacles):
        min_obstacle_distance(empty, PointCloud([[0.0, 0.0, 0.0]]))
    with pytest.raises(EmptyCloud):
        min_obstacle_distance(point_scene, PointCloud(np.zeros((0, 3))))


def test_min_obstacle_distance_brute_force_and_symmetry():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, size=(10, 3))
    b = rng.uniform(-1, 1, size=(10, 3))
    brute = min(np.linalg.norm(p - q) for p in a for q in b)
    scene_ab = Scene(Bounds(), {}, PointCloud(b))
    scene_ba = Scene(Bounds(), {}, PointCloud(a))
    d_ab = min_obstacle_distance(scene_ab, PointCloud(a)).distance
    d_ba = min_obstacle_distance(scene_ba, PointCloud(b)).distance
    assert d_ab == pytest.approx(brute, abs=1e-12)
    assert d_ab == pytest.approx(d_ba, abs=1e-12)


def test_empty_obstacle_cloud_is_infinitely_far(free_scene, box_cloud):
    assert min_obstacle_distance(free_scene, box_cloud).distance == math.inf


def test_distance_grid_matches_brute_force_at_nodes():
    rng = np.random.default_rng(1)
    obstacles = PointCloud(rng.uniform(-0.5, 0.5, size=(30, 3)))
    bounds = Bounds((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
    grid = DistanceGrid.from_cloud(obstacles, bounds, 0.1)
    assert grid.shape == (11, 11, 11)
    for index in [(0, 0, 0), (5, 3, 7), (10, 10, 10)]:
        node = np.asarray(grid.origin) + 0.1 * np.asarray(index)
        brute = np.min(np.linalg.norm(obstacles.points - node, axis=1))
        assert grid.values[index] == pytest.approx(brute, abs=1e-6)
        assert grid.query(node)[0] == pytest.approx(brute, abs=1e-6)


def test_scene_grid_queries_are_flagged():
    obstacles = PointCloud([[0.0, 0.0, 0.4]])
    scene = Scene(Bounds((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)), {}, obstacles).with_distance_grid(0.05)
    inside = min_obstacle_distance(scene, PointCloud([[0.0, 0.0, 0.0]]))
    assert inside.from_grid
    assert inside.distance == pytest.approx(0.4, abs=1e-6)
    outside = min_obstacle_distance(scene, PointCloud([[0.0, 0.0, 2.0]]))
    assert not outside.from_grid
    assert outside.distance == pytest.approx(1.6)
    exact = min_obstacle_distance(scene, PointCloud([[0.0, 0.0, 0.0]]), use_grid=False)
    assert not exact.from_grid


def test_farthest_point_examples():
    line = np.array([[float(i), 0.0, 0.0] for i in range(10)])
    assert farthest_point_indices(line, 3, 0) == [0, 9, 4]
    assert farthest_point_indices(line, 1, 0) == [0]
    full = farthest_point_sample(PointCloud(line), 10)
    np.testing.assert_array_equal(full.points, line)
    with pytest.raises(InsufficientPoints):
        farthest_point_indices(line, 11)


def test_farthest_point_subset_and_duplicate_invariance():
    rng = np.random.default_rng(5)
    points = rng.uniform(-1, 1, size=(50, 3))
    chosen = farthest_point_indices(points, 8)
    padded = np.concatenate([points, points[chosen[:3]]])
    assert farthest_point_indices(padded, 8) == chosen
    sample = farthest_point_sample(PointCloud(points), 8)
    for p in sample.points:
        assert np.any(np.all(points == p, axis=1))


def test_farthest_point_pads_degenerate_cloud(caplog):
    same = np.ones((5, 3))
    assert farthest_point_indices(same, 4, seed_index=2) == [2, 2, 2, 2]
    assert "padding" in caplog.text


def test_angular_distance_examples():
    assert angular_distance(0.0, 0.0) == 0.0
    assert angular_distance(math.radians(350), math.radians(10)) == pytest.approx(math.radians(20))
    assert angular_distance(-math.pi, math.pi) == pytest.approx(0.0, abs=1e-12)


def test_angular_distance_is_a_metric():
    rng = np.random.default_rng(9)
    for a, b, c in rng.uniform(-10, 10, size=(1000, 3)):
        assert angular_distance(a, b) == pytest.approx(angular_distance(b, a), abs=1e-12)
        assert angular_distance(a, c) <= angular_distance(a, b) + angular_distance(b, c) + 1e-9
        assert 0.0 <= angular_distance(a, b) <= math.pi + 1e-12


def test_pose_distance_weights_rotation():
    a = Pose()
    b = Pose((0.3, 0.0, 0.4), (0.0, 0.0, 1.0))
    assert pose_distance(a, b, w_rot=0.0) == pytest.approx(0.5)
    assert pose_distance(a, b, w_rot=0.2) == pytest.approx(math.sqrt(0.25 + 0.04))


def test_interpolate_pose_takes_the_short_arc():
    a = Pose((0, 0, 0), (0, 0, math.radians(170)))
    b = Pose((1, 0, 0), (0, 0, math.radians(-170)))
    mid = interpolate_pose(a, b, 0.5)
    assert mid.translation[0] == pytest.approx(0.5)
    assert abs(mid.rotation[2]) == pytest.approx(math.pi)


def test_densify_respects_resolution():
    poses = [Pose(), Pose((0.0105, 0, 0)), Pose((0.0105, 0.002, 0))]
    dense = densify(poses, 0.001)
    assert dense[0] == poses[0] and dense[-1] == poses[-1]
    steps = [math.dist(a.translation, b.translation) for a, b in zip(dense[:-1], dense[1:])]
    assert max(steps) <= 0.001 + 1e-12
    assert sum(steps) == pytest.approx(0.0125)
    with pytest.raises(InvalidInput):
        densify(poses, 0.0)


def test_point_cloud_validation():
    with pytest.raises(InvalidInput):
        PointCloud([[0.0, 0.0]])
    with pytest.raises(InvalidInput):
        PointCloud([[0.0, math.inf, 0.0]])
    assert PointCloud([]).count == 0


def test_cloud_file_round_trip(tmp_path):
    cloud = PointCloud([[0.1, 0.2, 0.3], [1.0 / 3.0, -2.0, 5e-7]])
    path = tmp_path / "c.xyz"
    save_cloud(path, cloud)
    loaded = load_cloud(path)
    np.testing.assert_array_equal(loaded.points, cloud.points)


def test_cloud_file_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.xyz"
    path.write_text("# comment\n0 0 0\n1 2 nan\n")
    with pytest.raises(FileFormatError):
        load_cloud(path)
    path.write_text("0 0\n")
    with pytest.raises(FileFormatError):
        load_cloud(path)


def test_scene_catalog_and_hash(point_scene):
    with pytest.raises(UnknownObject):
        point_scene.object_cloud("missing")
    with pytest.raises(InvalidInput):
        Scene(Bounds(), [("a", PointCloud([[0, 0, 0]])), ("a", PointCloud([[1, 0, 0]]))])
    twin = Scene(point_scene.bounds, dict(point_scene.objects), point_scene.obstacle_cloud, name="other")
    assert twin.scene_hash == point_scene.scene_hash
    moved = Scene(point_scene.bounds, dict(point_scene.objects), PointCloud([[0.0, 0.0, 0.9]]))
    assert moved.scene_hash != point_scene.scene_hash


def test_scene_file_round_trip(tmp_path, point_scene):
    path = point_scene.to_file(tmp_path / "scene.txt")
    loaded = Scene.from_file(path)
    assert loaded.scene_hash == point_scene.scene_hash
    assert loaded.name == "point"
    assert loaded.object_cloud("dot").allclose(point_scene.object_cloud("dot"))


def test_scene_file_errors(tmp_path):
    path = tmp_path / "scene.txt"
    path.write_text("name = x\n")
    with pytest.raises(FileFormatError):
        Scene.from_file(path)
    path.write_text("bounds = 0 0 0 1 1\n")
    with pytest.raises(FileFormatError):
        Scene.from_file(path)
