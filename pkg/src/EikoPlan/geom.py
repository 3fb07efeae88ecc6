"""
Pose algebra, point clouds, and obstacle-distance queries.

Poses are 6-vectors (x, y, z, roll, pitch, yaw). Rotations use the
intrinsic Z-Y-X Euler convention: yaw about z, then pitch about the new y,
then roll about the newest x, i.e. ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.

.. autosummary::

    ~Pose
    ~PointCloud
    ~Bounds
    ~DistanceGrid
    ~Scene
    ~DistanceQuery
    ~wrap_angle
    ~wrap_angles
    ~angular_distance
    ~translation_distance
    ~pose_distance
    ~interpolate_pose
    ~densify
    ~transform_cloud
    ~min_obstacle_distance
    ~farthest_point_indices
    ~farthest_point_sample
    ~load_cloud
    ~save_cloud
"""

import dataclasses
import hashlib
import logging
import math
import pathlib
import types
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import CANONICAL_POINTS, W_ROT
from .errors import (
    EmptyCloud,
    FileFormatError,
    InsufficientPoints,
    InvalidInput,
    MissingObstacles,
    UnknownObject,
)

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi


# ========================================
# Angles
# ========================================


def wrap_angle(angle):
    """Wrap a scalar angle (radians) into (-pi, pi]; in-range values pass unchanged."""
    angle = float(angle)
    if -math.pi < angle <= math.pi:
        return angle
    wrapped = math.pi - (math.pi - angle) % TWO_PI
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def wrap_angles(angles):
    """Vectorized :func:`wrap_angle` over a numpy array."""
    angles = np.asarray(angles, dtype=float)
    wrapped = math.pi - np.mod(math.pi - angles, TWO_PI)
    wrapped = np.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)
    in_range = (angles > -math.pi) & (angles <= math.pi)
    return np.where(in_range, angles, wrapped)


def angular_distance(a, b):
    """Absolute wrapped difference of two angles, in [0, pi]."""
    return abs(wrap_angle(float(a) - float(b)))


# ========================================
# Pose
# ========================================


@dataclasses.dataclass(frozen=True)
class Pose:
    """
    Object pose: translation (m) and Euler rotation (roll, pitch, yaw; rad).

    Rotation components are wrapped to (-pi, pi] on construction. Reduced
    planar modes are expressed by leaving unused components at zero, see
    :meth:`planar`.
    """

    translation: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        translation = tuple(float(v) for v in self.translation)
        rotation = tuple(float(v) for v in self.rotation)
        if len(translation) != 3 or len(rotation) != 3:
            raise InvalidInput("pose needs 3 translation and 3 rotation components")
        if not all(math.isfinite(v) for v in translation + rotation):
            raise InvalidInput(f"non-finite pose {translation + rotation}")
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "rotation", tuple(wrap_angle(a) for a in rotation))

    @classmethod
    def from_vector(cls, vector):
        """Build from a 6-vector (x, y, z, roll, pitch, yaw)."""
        vector = [float(v) for v in np.ravel(vector)]
        if len(vector) != 6:
            raise InvalidInput(f"pose vector needs 6 components, got {len(vector)}")
        return cls(tuple(vector[:3]), tuple(vector[3:]))

    @classmethod
    def planar(cls, x, y, yaw=0.0):
        """Reduced (x, y[, yaw]) pose, zero-padded to six components."""
        return cls((x, y, 0.0), (0.0, 0.0, yaw))

    def as_vector(self):
        """Return the pose as a float numpy 6-vector."""
        return np.array(self.translation + self.rotation, dtype=float)

    def rotation_matrix(self):
        """3x3 rotation matrix of the intrinsic Z-Y-X Euler angles."""
        roll, pitch, yaw = self.rotation
        return Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()

    @classmethod
    def from_matrix(cls, rotation_matrix, translation):
        """Build from a rotation matrix and a translation."""
        yaw, pitch, roll = Rotation.from_matrix(rotation_matrix).as_euler("ZYX")
        return cls(tuple(np.ravel(translation)), (roll, pitch, yaw))

    def compose(self, other):
        """Return ``self ∘ other``: apply ``other`` first, then ``self``."""
        rot = self.rotation_matrix()
        translation = rot @ np.asarray(other.translation) + np.asarray(self.translation)
        return Pose.from_matrix(rot @ other.rotation_matrix(), translation)

    def inverse(self):
        """Pose whose transform undoes this one."""
        rot_t = self.rotation_matrix().T
        return Pose.from_matrix(rot_t, -rot_t @ np.asarray(self.translation))

    def __str__(self):
        return " ".join(f"{v:.6g}" for v in self.translation + self.rotation)


def translation_distance(a, b):
    """Euclidean distance between two pose translations (m)."""
    return math.dist(a.translation, b.translation)


def pose_distance(a, b, w_rot=W_ROT):
    """Weighted pose metric: translation plus ``w_rot`` times wrapped rotation."""
    sq = sum((p - q) ** 2 for p, q in zip(a.translation, b.translation))
    sq += w_rot**2 * sum(angular_distance(p, q) ** 2 for p, q in zip(a.rotation, b.rotation))
    return math.sqrt(sq)


def interpolate_pose(a, b, t):
    """Linear interpolation, rotations along the shorter wrapped arc."""
    ta, tb = np.asarray(a.translation), np.asarray(b.translation)
    ra, rb = np.asarray(a.rotation), np.asarray(b.rotation)
    translation = ta + t * (tb - ta)
    rotation = ra + t * wrap_angles(rb - ra)
    return Pose(tuple(translation), tuple(rotation))


def densify(poses, resolution, w_rot=W_ROT):
    """
    Insert interpolated poses so that no step exceeds ``resolution``.

    The step of a pair is measured as the larger of its translation gap and
    ``w_rot`` times its largest per-axis rotation gap. Original poses are
    kept as-is.
    """
    if resolution <= 0:
        raise InvalidInput(f"resolution must be positive, got {resolution}")
    poses = list(poses)
    if len(poses) < 2:
        return poses
    dense = []
    for a, b in zip(poses[:-1], poses[1:]):
        rot_gap = max(angular_distance(p, q) for p, q in zip(a.rotation, b.rotation))
        gap = max(translation_distance(a, b), w_rot * rot_gap)
        n = max(1, int(math.ceil(gap / resolution - 1e-9)))
        dense.append(a)
        dense.extend(interpolate_pose(a, b, k / n) for k in range(1, n))
    dense.append(poses[-1])
    return dense


# ========================================
# Point clouds
# ========================================


@dataclasses.dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable (N, 3) array of finite points in meters."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.size == 0:
            pts = np.zeros((0, 3))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInput(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self):
        """Number of points."""
        return int(self.points.shape[0])

    def __len__(self):
        return self.count

    def scaled(self, factor):
        """Uniformly scaled copy (about the origin)."""
        return PointCloud(self.points * float(factor))

    def allclose(self, other, atol=1e-9):
        """Same shape and coordinates within ``atol``."""
        return self.points.shape == other.points.shape and np.allclose(
            self.points, other.points, rtol=0.0, atol=atol
        )


def transform_cloud(cloud, pose):
    """Rigidly move every point: ``R(pose.rotation) @ p + pose.translation``."""
    if cloud.count == 0:
        raise EmptyCloud("cannot transform an empty point cloud")
    rot = pose.rotation_matrix()
    return PointCloud(cloud.points @ rot.T + np.asarray(pose.translation))


def farthest_point_indices(points, k, seed_index=0):
    """
    Greedy farthest point selection; returns indices in selection order.

    Each step picks the point maximizing its distance to the selected set,
    lowest index on ties. When the distinct points run out before ``k``,
    the remainder is padded with ``seed_index``.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if k > n:
        raise InsufficientPoints(f"requested {k} points from a cloud of {n}")
    if k <= 0:
        return []
    if not 0 <= seed_index < n:
        raise InvalidInput(f"seed index {seed_index} outside [0, {n})")
    selected = [int(seed_index)]
    dists = np.linalg.norm(points - points[seed_index], axis=1)
    while len(selected) < k:
        idx = int(np.argmax(dists))
        if dists[idx] <= 0.0:
            logger.warning(
                "only %d distinct points, padding %d copies of the seed point",
                len(selected),
                k - len(selected),
            )
            selected.extend([int(seed_index)] * (k - len(selected)))
            break
        selected.append(idx)
        dists = np.minimum(dists, np.linalg.norm(points - points[idx], axis=1))
    return selected


def farthest_point_sample(cloud, k=CANONICAL_POINTS, seed_index=0):
    """Downsample to ``k`` points by FPS; selected points keep input order."""
    indices = sorted(farthest_point_indices(cloud.points, k, seed_index))
    return PointCloud(cloud.points[indices])


def load_cloud(path):
    """
    Read a point-cloud text file: one ``x y z`` triple per line, meters.

    ``#`` starts a comment. Non-finite values are rejected.
    """
    path = pathlib.Path(path)
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise FileFormatError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
            try:
                row = [float(p) for p in parts]
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in row):
                raise FileFormatError(f"{path}:{lineno}: non-finite coordinate")
            rows.append(row)
    return PointCloud(np.array(rows, dtype=float).reshape(-1, 3))


def save_cloud(path, cloud, comment=None):
    """Write a point cloud in the text format read by :func:`load_cloud`."""
    header = comment or f"{cloud.count} points, x y z in meters"
    np.savetxt(path, cloud.points, fmt="%.17g", header=header, comments="# ")


# ========================================
# Scene
# ========================================


@dataclasses.dataclass(frozen=True)
class Bounds:
    """Axis-aligned box (m)."""

    lower: tuple = (0.0, 0.0, 0.0)
    upper: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != 3 or len(upper) != 3:
            raise InvalidInput("bounds need 3 lower and 3 upper values")
        if any(lo > hi for lo, hi in zip(lower, upper)):
            raise InvalidInput(f"bounds lower {lower} exceed upper {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def contains(self, point, tol=1e-9):
        """Is the 3-vector inside the box (inclusive, with tolerance)?"""
        return all(lo - tol <= p <= hi + tol for p, lo, hi in zip(point, self.lower, self.upper))

    @property
    def extent(self):
        """Edge lengths of the box."""
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper))


@dataclasses.dataclass(frozen=True, eq=False)
class DistanceGrid:
    """Uniform grid of precomputed minimum distances to the obstacle cloud."""

    origin: tuple
    spacing: float
    values: np.ndarray

    @classmethod
    def from_cloud(cls, cloud, bounds, spacing):
        """Evaluate exact nearest-obstacle distances at every grid node."""
        if spacing <= 0:
            raise InvalidInput(f"grid spacing must be positive, got {spacing}")
        if cloud.count == 0:
            raise EmptyCloud("cannot build a distance grid without obstacle points")
        shape = tuple(
            int(math.floor((hi - lo) / spacing + 1e-9)) + 1
            for lo, hi in zip(bounds.lower, bounds.upper)
        )
        axes = [lo + spacing * np.arange(n) for lo, n in zip(bounds.lower, shape)]
        nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        dist, _ = cKDTree(cloud.points).query(nodes)
        logger.debug("distance grid %s built from %d obstacle points", shape, cloud.count)
        return cls(tuple(bounds.lower), float(spacing), dist.reshape(shape))

    @property
    def shape(self):
        """Node counts per axis."""
        return self.values.shape

    @property
    def axes(self):
        """Node coordinates per axis."""
        return [o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.shape)]

    @cached_property
    def _interpolator(self):
        axes = [a if len(a) > 1 else np.array([a[0], a[0] + self.spacing]) for a in self.axes]
        values = self.values
        for axis, n in enumerate(self.shape):
            if n == 1:
                values = np.concatenate([values, values], axis=axis)
        return RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=None)

    def contains(self, points):
        """Boolean mask of points inside the grid extents."""
        points = np.atleast_2d(points)
        upper = np.asarray(self.origin) + self.spacing * (np.asarray(self.shape) - 1)
        return np.all((points >= np.asarray(self.origin) - 1e-12) & (points <= upper + 1e-12), axis=1)

    def query(self, points):
        """Trilinear interpolation of the grid, clamped at zero."""
        return np.maximum(self._interpolator(np.atleast_2d(points)), 0.0)


class DistanceQuery(NamedTuple):
    """Result of :func:`min_obstacle_distance`."""

    distance: float
    from_grid: bool

    def __float__(self):
        return float(self.distance)


@dataclasses.dataclass(frozen=True, eq=False)
class Scene:
    """
    Obstacles, workspace bounds, and the object catalog.

    ``contact_tolerance`` is the clearance at or below which a pose counts
    as colliding; 0 gives the literal ``d <= 0`` test.
    """

    bounds: Bounds
    objects: dict = dataclasses.field(default_factory=dict)
    obstacle_cloud: PointCloud = None
    distance_grid: DistanceGrid = None
    contact_tolerance: float = 0.0
    name: str = ""

    def __post_init__(self):
        items = list(self.objects.items()) if hasattr(self.objects, "items") else list(self.objects)
        ids = [str(object_id) for object_id, _ in items]
        if len(set(ids)) != len(ids):
            raise InvalidInput(f"duplicate object ids in catalog: {ids}")
        catalog = {str(k): v for k, v in items}
        object.__setattr__(self, "objects", types.MappingProxyType(catalog))
        if self.contact_tolerance < 0:
            raise InvalidInput("contact tolerance must be non-negative")

    def object_cloud(self, object_id):
        """Canonical cloud of a catalog object."""
        try:
            return self.objects[str(object_id)]
        except KeyError:
            raise UnknownObject(f"unknown object {object_id!r}") from None

    @cached_property
    def obstacle_tree(self):
        """KD-tree over the obstacle cloud (None when no points)."""
        if self.obstacle_cloud is None or self.obstacle_cloud.count == 0:
            return None
        return cKDTree(self.obstacle_cloud.points)

    def with_distance_grid(self, spacing):
        """Copy with a distance grid of the given spacing over the bounds."""
        if self.obstacle_cloud is None or self.obstacle_cloud.count == 0:
            logger.info("scene %r has no obstacle points; no distance grid built", self.name)
            return self
        grid = DistanceGrid.from_cloud(self.obstacle_cloud, self.bounds, spacing)
        return dataclasses.replace(self, objects=dict(self.objects), distance_grid=grid)

    @cached_property
    def scene_hash(self):
        """Stable SHA-256 over bounds, obstacles, catalog, and tolerance."""
        h = hashlib.sha256()
        h.update(repr((self.bounds.lower, self.bounds.upper, self.contact_tolerance)).encode())
        if self.obstacle_cloud is not None:
            h.update(np.ascontiguousarray(self.obstacle_cloud.points).tobytes())
        for object_id in sorted(self.objects):
            h.update(object_id.encode())
            h.update(np.ascontiguousarray(self.objects[object_id].points).tobytes())
        return h.hexdigest()

    # ========================================
    # Scene files
    # ========================================

    @classmethod
    def from_file(cls, path):
        """
        Read a key-value scene file.

        Keys: ``name``, ``bounds`` (6 numbers: lower then upper),
        ``obstacles`` (cloud path), ``grid_spacing``, ``contact_tolerance``,
        and one ``object.<id>`` entry per catalog object. Relative paths are
        resolved against the scene file's directory.
        """
        path = pathlib.Path(path)
        entries = {}
        objects = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise FileFormatError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (s.strip() for s in text.split("=", 1))
                if key.startswith("object."):
                    object_id = key[len("object.") :]
                    if object_id in objects:
                        raise FileFormatError(f"{path}:{lineno}: duplicate object {object_id!r}")
                    objects[object_id] = value
                else:
                    entries[key] = value
        if "bounds" not in entries:
            raise FileFormatError(f"{path}: missing 'bounds'")
        try:
            numbers = [float(v) for v in entries["bounds"].split()]
        except ValueError as exc:
            raise FileFormatError(f"{path}: bad bounds: {exc}") from exc
        if len(numbers) != 6:
            raise FileFormatError(f"{path}: bounds need 6 numbers")
        base = path.parent
        obstacle_cloud = None
        if "obstacles" in entries:
            obstacle_cloud = load_cloud(base / entries["obstacles"])
        scene = cls(
            bounds=Bounds(tuple(numbers[:3]), tuple(numbers[3:])),
            objects={k: load_cloud(base / v) for k, v in objects.items()},
            obstacle_cloud=obstacle_cloud,
            contact_tolerance=float(entries.get("contact_tolerance", 0.0)),
            name=entries.get("name", path.stem),
        )
        if "grid_spacing" in entries:
            scene = scene.with_distance_grid(float(entries["grid_spacing"]))
        return scene

    def to_file(self, path):
        """Write the scene file plus one cloud file per object and obstacles."""
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        stem = path.stem
        lines = [
            "# EikoPlan scene",
            f"name = {self.name or stem}",
            "bounds = " + " ".join(repr(v) for v in self.bounds.lower + self.bounds.upper),
            f"contact_tolerance = {self.contact_tolerance!r}",
        ]
        if self.obstacle_cloud is not None:
            save_cloud(path.parent / f"{stem}_obstacles.xyz", self.obstacle_cloud)
            lines.append(f"obstacles = {stem}_obstacles.xyz")
        if self.distance_grid is not None:
            lines.append(f"grid_spacing = {self.distance_grid.spacing!r}")
        for object_id, cloud in self.objects.items():
            save_cloud(path.parent / f"{stem}_{object_id}.xyz", cloud)
            lines.append(f"object.{object_id} = {stem}_{object_id}.xyz")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def min_obstacle_distance(scene, cloud, use_grid=True):
    """
    Minimum Euclidean distance between any cloud point and any obstacle point.

    With a distance grid covering every point the value is interpolated and
    flagged with ``from_grid=True``. An obstacle cloud without points gives
    ``inf``.
    """
    if cloud.count == 0:
        raise EmptyCloud("distance query needs a non-empty cloud")
    if scene.obstacle_cloud is None and scene.distance_grid is None:
        raise MissingObstacles(f"scene {scene.name!r} has no obstacle data")
    grid = scene.distance_grid if use_grid else None
    if grid is not None and (scene.obstacle_cloud is None or grid.contains(cloud.points).all()):
        return DistanceQuery(float(grid.query(cloud.points).min()), True)
    tree = scene.obstacle_tree
    if tree is None:
        return DistanceQuery(math.inf, False)
    dist, _ = tree.query(cloud.points, k=1)
    return DistanceQuery(float(dist.min()), False)
