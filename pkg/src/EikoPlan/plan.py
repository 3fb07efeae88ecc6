"""
Trajectories from time fields, and regrasp planning over grasp/IK providers.

Trajectory extraction descends the field from both ends at once: the start
front follows ``-∇_{p_s} T`` and the goal front ``-∇_{p_g} T`` until they
meet. :func:`omanip` checks grasps along the result and, when no single
grasp covers it, inserts an in-place rotation (:func:`decouple`) and
solves the two halves recursively.

.. autosummary::

    ~TimeField
    ~LearnedField
    ~EuclideanField
    ~as_time_field
    ~MarchParams
    ~Trajectory
    ~march_bidirectional
    ~Grasp
    ~sort_grasps
    ~load_grasps
    ~save_grasps
    ~IKProvider
    ~ShellIK
    ~PredicateIK
    ~Segment
    ~PlanResult
    ~decouple
    ~omanip
    ~merge_segments
    ~smooth
    ~ValidationReport
    ~validate_trajectory
"""

import dataclasses
import logging
import math
import pathlib
import time
from typing import NamedTuple

import numpy as np

from . import D_S, DEPTH_LIMIT, ETA, MAX_ITERS, S_CONST, VALIDATION_RESOLUTION, W_ROT, net
from .errors import (
    DegenerateDecouple,
    FileFormatError,
    InvalidInput,
    NoConvergence,
    PlanFailure,
)
from .geom import (
    Pose,
    angular_distance,
    densify,
    interpolate_pose,
    min_obstacle_distance,
    pose_distance,
    transform_cloud,
    translation_distance,
    wrap_angles,
)
from .speed import SphericalShell

logger = logging.getLogger(__name__)

GRADIENT_FLOOR = 1e-12
SOURCES = ("learned_field", "oracle_backtrack", "analytic")


# ========================================
# Time fields
# ========================================


class TimeField:
    """
    Anything marching can descend: T and its gradients at a pose pair.

    Subclasses set ``w_rot`` (metric rotation weight) and ``s_const``
    (speed ceiling) and implement :meth:`time_and_gradients`.
    """

    w_rot = W_ROT
    s_const = S_CONST
    source = "analytic"

    def time_and_gradients(self, p_s, p_g):
        """Return ``(T, ∇_{p_s} T, ∇_{p_g} T)`` with numpy 6-vector gradients."""
        raise NotImplementedError

    def time(self, p_s, p_g):
        """Arrival time only."""
        return self.time_and_gradients(p_s, p_g)[0]


class LearnedField(TimeField):
    """A trained :class:`~EikoPlan.net.TimeFieldModel` bound to one object cloud."""

    source = "learned_field"

    def __init__(self, model, object_cloud, s_const=S_CONST):
        self.model = model
        self.clouds = net.cloud_tensor(object_cloud, model.config.n_points)
        self.w_rot = model.config.w_rot
        self.s_const = s_const

    def time_and_gradients(self, p_s, p_g):
        t, grad_s, grad_g = net.time_and_gradients(
            self.model, self.clouds, net.pose_tensor(p_s), net.pose_tensor(p_g)
        )
        return float(t[0]), grad_s[0].numpy(), grad_g[0].numpy()


class EuclideanField(TimeField):
    """Obstacle-free field ``T = dist_w(p_s, p_g) / s_const``."""

    def __init__(self, w_rot=W_ROT, s_const=S_CONST):
        self.w_rot = w_rot
        self.s_const = s_const

    def time_and_gradients(self, p_s, p_g):
        d_trans = np.subtract(p_g.translation, p_s.translation)
        d_rot = wrap_angles(np.subtract(p_g.rotation, p_s.rotation))
        dist = math.sqrt(float(d_trans @ d_trans) + self.w_rot**2 * float(d_rot @ d_rot))
        if dist == 0.0:
            return 0.0, np.zeros(6), np.zeros(6)
        grad_g = np.concatenate([d_trans, self.w_rot**2 * d_rot]) / (dist * self.s_const)
        return dist / self.s_const, -grad_g, grad_g


def as_time_field(model, object_cloud=None):
    """Wrap a TimeFieldModel into a :class:`LearnedField`; pass TimeFields through."""
    if isinstance(model, TimeField):
        return model
    if object_cloud is None:
        raise InvalidInput("a learned model needs the object cloud")
    return LearnedField(model, object_cloud)


# ========================================
# Marching
# ========================================


@dataclasses.dataclass(frozen=True)
class MarchParams:
    """Step size, meeting threshold, and iteration cap of marching."""

    eta: float = ETA
    d_s: float = D_S
    max_iters: int = MAX_ITERS

    def __post_init__(self):
        if self.eta <= 0 or self.d_s <= 0 or self.max_iters < 0:
            raise InvalidInput(f"invalid march parameters {self}")

    def to_dict(self):
        """Plain dict for settings and plan output."""
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Ordered object poses; ``length_m`` is the translation arc length."""

    poses: tuple
    source: str = "analytic"
    iterations: int = 0
    length_m: float = dataclasses.field(init=False)

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise InvalidInput("a trajectory needs at least one pose")
        if self.source not in SOURCES:
            raise InvalidInput(f"unknown trajectory source {self.source!r}")
        object.__setattr__(self, "poses", poses)
        length = sum(translation_distance(a, b) for a, b in zip(poses[:-1], poses[1:]))
        object.__setattr__(self, "length_m", length)

    def __len__(self):
        return len(self.poses)

    @property
    def start(self):
        """First pose."""
        return self.poses[0]

    @property
    def end(self):
        """Last pose."""
        return self.poses[-1]

    def to_dict(self):
        """JSON-friendly form."""
        return {
            "source": self.source,
            "iterations": self.iterations,
            "length_m": self.length_m,
            "poses": [list(p.as_vector()) for p in self.poses],
        }


def _descend(pose, gradient, eta, s_const):
    norm = float(np.linalg.norm(gradient))
    speed = s_const if norm < GRADIENT_FLOOR else min(1.0 / norm, s_const)
    return Pose.from_vector(pose.as_vector() - eta * speed**2 * gradient)


def march_bidirectional(model, object_cloud, p_s, p_g, eta=ETA, d_s=D_S, max_iters=MAX_ITERS):
    """
    Grow fronts from both ends by ``p <- p - eta * S(p)^2 * ∇_p T`` until they meet.

    ``S = 1/|∇T|`` is capped at the field's ``s_const``, so no step exceeds
    ``eta * s_const``. The remaining gap is bridged by linear interpolation.

    Args:
        model: A :class:`TimeField` or a TimeFieldModel.
        object_cloud: Canonical object cloud; needed for a TimeFieldModel.
        p_s: Start pose.
        p_g: Goal pose.
        eta: Step size.
        d_s: Meeting threshold on the weighted pose metric.
        max_iters: Iteration cap.

    Returns:
        :class:`Trajectory` from ``p_s`` to ``p_g``.
    """
    MarchParams(eta, d_s, max_iters)
    field = as_time_field(model, object_cloud)
    if p_s == p_g:
        raise InvalidInput("start and goal poses coincide")
    start_chain, goal_chain = [p_s], [p_g]
    iterations = 0
    while pose_distance(start_chain[-1], goal_chain[-1], field.w_rot) >= d_s:
        if iterations >= max_iters:
            raise NoConvergence(start_chain, goal_chain, iterations)
        a, b = start_chain[-1], goal_chain[-1]
        _, grad_s, grad_g = field.time_and_gradients(a, b)
        start_chain.append(_descend(a, grad_s, eta, field.s_const))
        goal_chain.append(_descend(b, grad_g, eta, field.s_const))
        iterations += 1
    a, b = start_chain[-1], goal_chain[-1]
    gap = pose_distance(a, b, field.w_rot)
    bridge = []
    if gap < 1e-12 and len(goal_chain) > 1:
        goal_chain = goal_chain[:-1]
    else:
        n = max(1, int(math.ceil(gap / (eta * field.s_const) - 1e-9)))
        bridge = [interpolate_pose(a, b, k / n) for k in range(1, n)]
    poses = start_chain + bridge + goal_chain[::-1]
    logger.debug("fronts met after %d iterations, %d poses", iterations, len(poses))
    return Trajectory(tuple(poses), field.source, iterations)


# ========================================
# Grasps and IK
# ========================================


@dataclasses.dataclass(frozen=True)
class Grasp:
    """Gripper pose in the object frame, with a stability score (higher is better)."""

    id: str
    transform: Pose = Pose()
    score: float = 0.0


def sort_grasps(grasps):
    """Grasps by descending score, stable on ties."""
    return sorted(grasps, key=lambda g: -g.score)


def load_grasps(path):
    """
    Read a grasp list: one ``id x y z roll pitch yaw score`` record per line.

    ``#`` starts a comment. Returned sorted by descending score.
    """
    path = pathlib.Path(path)
    grasps = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 8:
                raise FileFormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                values = [float(v) for v in parts[1:]]
                grasps.append(Grasp(parts[0], Pose.from_vector(values[:6]), values[6]))
            except (ValueError, InvalidInput) as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    if not grasps:
        raise FileFormatError(f"{path}: no grasps")
    return sort_grasps(grasps)


def save_grasps(path, grasps):
    """Write grasps in the format read by :func:`load_grasps`."""
    lines = ["# id x y z roll pitch yaw score"]
    for g in grasps:
        values = " ".join(repr(float(v)) for v in g.transform.as_vector())
        lines.append(f"{g.id} {values} {g.score!r}")
    pathlib.Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class IKProvider:
    """Feasibility predicate ``(object pose, grasp) -> bool``; must be deterministic."""

    def feasible(self, pose, grasp):
        """Can the robot hold ``grasp`` with the object at ``pose``?"""
        raise NotImplementedError


class ShellIK(IKProvider):
    """
    Gripper position (object pose ∘ grasp) inside a reachability shell,
    object translation inside the workspace bounds.
    """

    def __init__(self, shell=None, bounds=None):
        self.shell = shell or SphericalShell()
        self.bounds = bounds

    def gripper_position(self, pose, grasp):
        """World position of the gripper."""
        return pose.rotation_matrix() @ np.asarray(grasp.transform.translation) + np.asarray(pose.translation)

    def feasible(self, pose, grasp):
        if self.bounds is not None and not self.bounds.contains(pose.translation):
            return False
        return self.shell.contains(self.gripper_position(pose, grasp))


class PredicateIK(IKProvider):
    """IK provider from a plain ``(pose, grasp) -> bool`` callable."""

    def __init__(self, predicate):
        self.predicate = predicate

    def feasible(self, pose, grasp):
        return bool(self.predicate(pose, grasp))


# ========================================
# Regrasp planning
# ========================================


class Segment(NamedTuple):
    """A trajectory carried out with one grasp."""

    trajectory: Trajectory
    grasp: Grasp


@dataclasses.dataclass(frozen=True)
class PlanResult:
    """Ordered segments; consecutive segments share their boundary pose."""

    segments: tuple
    plan_time_s: float = 0.0
    intermediate_poses: tuple = dataclasses.field(init=False)
    total_length_m: float = dataclasses.field(init=False)

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "intermediate_poses", tuple(s.trajectory.end for s in segments[:-1]))
        object.__setattr__(self, "total_length_m", sum(s.trajectory.length_m for s in segments))

    @property
    def poses(self):
        """All poses in order, boundary poses once."""
        poses = list(self.segments[0].trajectory.poses)
        for segment in self.segments[1:]:
            poses.extend(segment.trajectory.poses[1:])
        return poses

    def to_dict(self):
        """JSON-friendly form."""
        return {
            "plan_time_s": self.plan_time_s,
            "total_length_m": self.total_length_m,
            "intermediate_poses": [list(p.as_vector()) for p in self.intermediate_poses],
            "segments": [
                {"grasp": s.grasp.id, "trajectory": s.trajectory.to_dict()} for s in self.segments
            ],
        }


def decouple(p_s, p_g):
    """
    Intermediate pose for an in-place rotation about one axis.

    Picks the rotation component farthest (wrapped) from its goal value,
    roll before pitch before yaw on ties, and sets it to the goal value at
    the start translation.
    """
    distances = [angular_distance(a, b) for a, b in zip(p_s.rotation, p_g.rotation)]
    if max(distances) == 0.0:
        raise DegenerateDecouple("start and goal rotations are equal")
    k = int(np.argmax(distances))
    rotation = list(p_s.rotation)
    rotation[k] = p_g.rotation[k]
    return Pose(p_s.translation, tuple(rotation))


class _Planner:
    """Recursive regrasp search state of one :func:`omanip` call."""

    def __init__(self, field, grasps, ik, march):
        self.field = field
        self.grasps = grasps
        self.ik = ik
        self.march = march

    def trajectory(self, p_s, p_g):
        if p_s == p_g:
            return Trajectory((p_s,), self.field.source)
        return march_bidirectional(
            self.field, None, p_s, p_g, self.march.eta, self.march.d_s, self.march.max_iters
        )

    def solve(self, p_s, p_g, depth):
        traj = self.trajectory(p_s, p_g)
        best_coverage, infeasible_pose = 0.0, None
        for grasp in self.grasps:
            feasible = [self.ik.feasible(p, grasp) for p in traj.poses]
            if all(feasible):
                return [Segment(traj, grasp)]
            coverage = sum(feasible) / len(feasible)
            if infeasible_pose is None or coverage > best_coverage:
                best_coverage = coverage
                infeasible_pose = traj.poses[feasible.index(False)]
        if depth <= 0:
            raise PlanFailure("recursion limit reached without a feasible grasp", infeasible_pose, best_coverage)
        try:
            p_c = decouple(p_s, p_g)
        except DegenerateDecouple as exc:
            raise PlanFailure(f"no feasible grasp and {exc}", infeasible_pose, best_coverage) from exc
        if p_c == p_g:
            # single-axis turn in place: regrasp halfway through the turn
            p_c = interpolate_pose(p_s, p_g, 0.5)
        logger.debug("regrasp at %s (depth %d)", p_c, depth)
        try:
            segments = self.solve(p_s, p_c, depth - 1) + self.solve(p_c, p_g, depth - 1)
        except PlanFailure as exc:
            exc.best_coverage = max(exc.best_coverage, best_coverage)
            raise
        return merge_segments(segments)


def merge_segments(segments):
    """Join neighbouring segments that hold the same grasp; no regrasp happens between them."""
    merged = [segments[0]]
    for segment in segments[1:]:
        last = merged[-1]
        if segment.grasp != last.grasp:
            merged.append(segment)
            continue
        a, b = last.trajectory, segment.trajectory
        joined = Trajectory(a.poses + b.poses[1:], a.source, a.iterations + b.iterations)
        merged[-1] = Segment(joined, last.grasp)
    return merged


def omanip(model, scene, object_id, p_s, p_g, grasps, ik, depth_limit=DEPTH_LIMIT, march=None):
    """
    Multi-segment manipulation plan with regrasps.

    When no grasp covers the whole trajectory, the task is split at the
    :func:`decouple` pose and both halves are planned recursively. A turn
    about one axis in place is split at its midpoint instead. Neighbouring
    segments with the same grasp are joined.

    Args:
        model: TimeField or TimeFieldModel for the object.
        scene: Scene holding the object catalog.
        object_id: Catalog id of the moved object.
        p_s: Start pose.
        p_g: Goal pose.
        grasps: Non-empty grasp list (sorted here by descending score).
        ik: :class:`IKProvider`.
        depth_limit: Maximum regrasp recursion depth.
        march: :class:`MarchParams`, defaults when None.

    Returns:
        :class:`PlanResult`.
    """
    if not grasps:
        raise InvalidInput("omanip needs at least one grasp")
    if depth_limit < 0:
        raise InvalidInput("depth_limit must be >= 0")
    started = time.perf_counter()
    cloud = None if isinstance(model, TimeField) else scene.object_cloud(object_id)
    field = as_time_field(model, cloud)
    planner = _Planner(field, sort_grasps(grasps), ik, march or MarchParams())
    segments = planner.solve(p_s, p_g, depth_limit)
    result = PlanResult(tuple(segments), time.perf_counter() - started)
    logger.info(
        "plan for %r: %d segment(s), %.3f m, %.3f s",
        object_id,
        len(result.segments),
        result.total_length_m,
        result.plan_time_s,
    )
    return result


# ========================================
# Smoothing and validation
# ========================================


class SmoothResult(NamedTuple):
    """Smoothed trajectory and whether smoothing was kept."""

    trajectory: Trajectory
    applied: bool


def _min_clearance(scene, cloud, poses):
    return min(min_obstacle_distance(scene, transform_cloud(cloud, p)).distance for p in poses)


def smooth(traj, window, scene=None, object_id=None):
    """
    Moving average over translations and unwrapped rotations, endpoints pinned.

    The window shrinks symmetrically near the ends. With a scene and object
    the result is kept only if its minimum clearance does not drop below the
    input's; otherwise the input is returned with ``applied=False``.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidInput(f"window must be odd and >= 1, got {window}")
    n = len(traj)
    if window == 1 or n < 3:
        return SmoothResult(traj, True)
    vectors = np.array([p.as_vector() for p in traj.poses])
    vectors[:, 3:] = np.unwrap(vectors[:, 3:], axis=0)
    smoothed = vectors.copy()
    for i in range(1, n - 1):
        half = min(window // 2, i, n - 1 - i)
        smoothed[i] = vectors[i - half : i + half + 1].mean(axis=0)
    poses = (traj.poses[0],) + tuple(Pose.from_vector(v) for v in smoothed[1:-1]) + (traj.poses[-1],)
    result = Trajectory(poses, traj.source, traj.iterations)
    if scene is not None and object_id is not None:
        cloud = scene.object_cloud(object_id)
        before = _min_clearance(scene, cloud, traj.poses)
        after = _min_clearance(scene, cloud, result.poses)
        if after < before:
            logger.warning("smoothing reduced clearance %.4g -> %.4g m; kept input", before, after)
            return SmoothResult(traj, False)
    return SmoothResult(result, True)


@dataclasses.dataclass(frozen=True)
class ValidationReport:
    """Dense collision check of a trajectory."""

    min_distance: float
    collision: bool
    length_m: float
    n_checked: int

    @property
    def margin_m(self):
        """Minimum clearance along the path."""
        return self.min_distance


def validate_trajectory(scene, object_id, traj, resolution_m=VALIDATION_RESOLUTION, w_rot=W_ROT):
    """
    Densify ``traj`` to ``resolution_m`` and check every pose against the obstacles.

    A pose collides when its clearance is at or below the scene's contact
    tolerance. Clearances are exact nearest-point distances; an obstacle
    cloud without points reports ``inf``.
    """
    if resolution_m <= 0:
        raise InvalidInput(f"resolution must be positive, got {resolution_m}")
    cloud = scene.object_cloud(object_id)
    dense = densify(traj.poses, resolution_m, w_rot)
    tree = scene.obstacle_tree
    if tree is not None:
        min_distance = math.inf
        chunk = 256
        for first in range(0, len(dense), chunk):
            points = np.concatenate([transform_cloud(cloud, p).points for p in dense[first : first + chunk]])
            dist, _ = tree.query(points, k=1)
            min_distance = min(min_distance, float(dist.min()))
    elif scene.obstacle_cloud is not None:
        min_distance = math.inf
    else:
        min_distance = _min_clearance(scene, cloud, dense)
    length = sum(translation_distance(a, b) for a, b in zip(dense[:-1], dense[1:]))
    return ValidationReport(min_distance, min_distance <= scene.contact_tolerance, length, len(dense))
