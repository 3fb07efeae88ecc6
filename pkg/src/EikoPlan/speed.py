"""
Ground-truth speed over object poses, reachability gating, and scheduling.

The speed of a pose is the clipped obstacle clearance of the object placed
there, scaled into ``(0, s_const]``. An unreachable pose has its clearance
multiplied by zero *before* clipping, so it gets the lowest speed rather
than zero.

.. autosummary::

    ~SpeedParams
    ~ReachabilityModel
    ~AlwaysReachable
    ~SphericalShell
    ~CustomReachability
    ~reachability_from_dict
    ~speed_from_distance
    ~ground_truth_speed
    ~scheduled_speed
    ~SampledPose
    ~sample_valid_pose
"""

import dataclasses
import logging
import math
from typing import NamedTuple

import numpy as np

from . import D_MAX, D_MIN, MAX_REJECTIONS, S_CONST, SHELL_R_INNER, SHELL_R_OUTER
from .errors import InvalidInput, SceneTooCluttered
from .geom import Pose, min_obstacle_distance, transform_cloud

logger = logging.getLogger(__name__)

ALPHA_MAX = 1.05
SPEED_FLOOR_FRACTION = 1e-3  # lower clamp of scheduled speeds, times s_const
SAMPLING_MODES = ("6d", "3d", "2d")


@dataclasses.dataclass(frozen=True)
class SpeedParams:
    """Constants of the clipped speed model."""

    s_const: float = S_CONST
    d_min: float = D_MIN
    d_max: float = D_MAX
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.s_const > 0 and math.isfinite(self.s_const)):
            raise InvalidInput(f"s_const must be positive, got {self.s_const}")
        if not 0 < self.d_min < self.d_max:
            raise InvalidInput(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")
        if not 0.0 <= self.alpha <= ALPHA_MAX:
            raise InvalidInput(f"alpha must lie in [0, {ALPHA_MAX}], got {self.alpha}")

    @property
    def min_speed(self):
        """Speed of a gated or touching pose: the lower clip value."""
        return self.s_const * self.d_min / self.d_max

    def to_dict(self):
        """Plain dict for file headers."""
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`; unknown keys are ignored."""
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: float(v) for k, v in data.items() if k in names})


# ========================================
# Reachability
# ========================================


class ReachabilityModel:
    """Binary reachability gate: maps a Pose to exactly 0 or 1."""

    kind = "abstract"

    def __call__(self, pose):
        return 1 if self.reachable(pose) else 0

    def reachable(self, pose):
        """Is the pose kinematically reachable?"""
        raise NotImplementedError

    def to_dict(self):
        """Plain dict for file headers."""
        return {"kind": self.kind}


class AlwaysReachable(ReachabilityModel):
    """Gate that never blocks."""

    kind = "always_reachable"

    def reachable(self, pose):
        return True


@dataclasses.dataclass(frozen=True)
class SphericalShell(ReachabilityModel):
    """Reachable when the object translation lies in a shell around the robot base."""

    center: tuple = (0.0, 0.0, 0.0)
    r_inner: float = SHELL_R_INNER
    r_outer: float = SHELL_R_OUTER
    kind = "spherical_shell"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if not 0 <= self.r_inner < self.r_outer:
            raise InvalidInput(f"need 0 <= r_inner < r_outer, got {self.r_inner}, {self.r_outer}")

    def contains(self, point):
        """Is the 3-vector inside the shell (inclusive)?"""
        r = math.dist(point, self.center)
        return self.r_inner <= r <= self.r_outer

    def reachable(self, pose):
        return self.contains(pose.translation)

    def to_dict(self):
        return {
            "kind": self.kind,
            "center": list(self.center),
            "r_inner": self.r_inner,
            "r_outer": self.r_outer,
        }


class CustomReachability(ReachabilityModel):
    """Gate driven by a user predicate ``Pose -> truthy``."""

    kind = "custom"

    def __init__(self, predicate):
        self.predicate = predicate

    def reachable(self, pose):
        return bool(self.predicate(pose))


def reachability_from_dict(data):
    """Rebuild a gate from :meth:`ReachabilityModel.to_dict` output."""
    kind = (data or {}).get("kind", AlwaysReachable.kind)
    if kind == AlwaysReachable.kind:
        return AlwaysReachable()
    if kind == SphericalShell.kind:
        return SphericalShell(
            tuple(data.get("center", (0.0, 0.0, 0.0))),
            float(data.get("r_inner", SHELL_R_INNER)),
            float(data.get("r_outer", SHELL_R_OUTER)),
        )
    raise InvalidInput(f"cannot rebuild reachability model of kind {kind!r}")


# ========================================
# Speed
# ========================================


def speed_from_distance(distance, gate, params):
    """``s_const / d_max * clip(distance * gate, d_min, d_max)``."""
    gated = 0.0 if gate == 0 else float(distance)
    return params.s_const * min(max(gated, params.d_min), params.d_max) / params.d_max


def ground_truth_speed(scene, object_id, pose, params=None, reach=None):
    """
    Ground-truth speed S* of an object placed at ``pose``.

    Args:
        scene: Scene holding the obstacles and the object catalog.
        object_id: Catalog id of the moved object.
        pose: Object pose.
        params: SpeedParams, defaults when None.
        reach: ReachabilityModel, :class:`AlwaysReachable` when None.

    Returns:
        float in ``[s_const * d_min / d_max, s_const]``.
    """
    params = params or SpeedParams()
    reach = reach or AlwaysReachable()
    cloud = transform_cloud(scene.object_cloud(object_id), pose)
    distance = min_obstacle_distance(scene, cloud).distance
    return speed_from_distance(distance, reach(pose), params)


def scheduled_speed(s_star, alpha, s_const=S_CONST):
    """
    Blend the uniform speed into S*: ``(1 - alpha) * s_const + alpha * s_star``.

    Works on scalars and numpy arrays. The result is clamped to
    ``(0, s_const]``.
    """
    if not 0.0 <= alpha <= ALPHA_MAX:
        raise InvalidInput(f"alpha must lie in [0, {ALPHA_MAX}], got {alpha}")
    s_star = np.asarray(s_star, dtype=float)
    if np.any(s_star <= 0) or np.any(s_star > s_const * (1 + 1e-12)):
        raise InvalidInput(f"target speeds must lie in (0, {s_const}]")
    blended = (1.0 - alpha) * s_const + alpha * s_star
    blended = np.clip(blended, SPEED_FLOOR_FRACTION * s_const, s_const)
    return float(blended) if blended.ndim == 0 else blended


# ========================================
# Pose sampling
# ========================================


class SampledPose(NamedTuple):
    """A collision-free pose and the rejections it took to find it."""

    pose: Pose
    rejections: int


def _random_pose(rng, bounds, mode):
    lower, upper = np.asarray(bounds.lower), np.asarray(bounds.upper)
    xyz = rng.uniform(lower, upper)
    angles = rng.uniform(-math.pi, math.pi, size=3)
    if mode == "6d":
        return Pose(tuple(xyz), tuple(angles))
    yaw = angles[2] if mode == "3d" else 0.0
    return Pose.planar(xyz[0], xyz[1], yaw)


def sample_valid_pose(scene, object_id, rng=None, mode="6d", max_rejections=MAX_REJECTIONS):
    """
    Rejection-sample a pose whose object clearance exceeds the contact tolerance.

    Translations are uniform over the scene bounds and angles uniform over
    (-pi, pi]. Reduced modes ``"3d"`` (x, y, yaw) and ``"2d"`` (x, y) keep
    the unused components at zero.

    Args:
        scene: Scene to sample in.
        object_id: Catalog id of the object.
        rng: ``numpy.random.Generator`` or integer seed.
        mode: One of ``"6d"``, ``"3d"``, ``"2d"``.
        max_rejections: Consecutive rejections tolerated.

    Returns:
        :class:`SampledPose`.
    """
    if mode not in SAMPLING_MODES:
        raise InvalidInput(f"sampling mode must be one of {SAMPLING_MODES}, got {mode!r}")
    rng = np.random.default_rng(rng)
    cloud = scene.object_cloud(object_id)
    rejections = 0
    while True:
        pose = _random_pose(rng, scene.bounds, mode)
        distance = min_obstacle_distance(scene, transform_cloud(cloud, pose)).distance
        if distance > scene.contact_tolerance:
            logger.debug("pose for %r accepted after %d rejections", object_id, rejections)
            return SampledPose(pose, rejections)
        rejections += 1
        if rejections >= max_rejections:
            raise SceneTooCluttered(object_id, rejections)
