"""
Exceptions raised by EikoPlan.

Library code raises these; only :mod:`EikoPlan.app` turns them into exit
codes.

.. autosummary::

    ~EikoPlanError
    ~EmptyCloud
    ~MissingObstacles
    ~InsufficientPoints
    ~UnknownObject
    ~SceneTooCluttered
    ~InvalidInput
    ~DegenerateGradient
    ~NanLoss
    ~NoConvergence
    ~DegenerateDecouple
    ~PlanFailure
    ~BacktrackStall
    ~SceneMismatch
    ~CheckpointMismatch
    ~FileFormatError
"""


class EikoPlanError(Exception):
    """Base class of every error raised by this package."""


class EmptyCloud(EikoPlanError):
    """A point cloud with no points was given where points are needed."""


class MissingObstacles(EikoPlanError):
    """The scene has neither an obstacle cloud nor a distance grid."""


class InsufficientPoints(EikoPlanError):
    """More points were requested than the cloud holds."""


class UnknownObject(EikoPlanError, KeyError):
    """The object id is not in the scene catalog."""

    def __str__(self):
        return Exception.__str__(self)


class SceneTooCluttered(EikoPlanError):
    """Pose sampling hit the consecutive-rejection limit."""

    def __init__(self, object_id, rejections):
        super().__init__(
            f"no collision-free pose for object {object_id!r}"
            f" after {rejections} consecutive rejections"
        )
        self.object_id = object_id
        self.rejections = rejections


class InvalidInput(EikoPlanError, ValueError):
    """Input value outside the accepted domain (non-finite, wrong shape, ...)."""


class DegenerateGradient(EikoPlanError):
    """Time-field gradient too small to define a speed."""


class NanLoss(EikoPlanError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch_index, value=float("nan")):
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch_index}"
        )
        self.epoch = epoch
        self.batch_index = batch_index
        self.value = value


class NoConvergence(EikoPlanError):
    """Bidirectional marching did not meet within the iteration limit."""

    def __init__(self, start_chain, goal_chain, iterations):
        super().__init__(
            f"fronts did not meet after {iterations} iterations"
            f" ({len(start_chain)} start-side, {len(goal_chain)} goal-side poses)"
        )
        self.start_chain = list(start_chain)
        self.goal_chain = list(goal_chain)
        self.iterations = iterations


class DegenerateDecouple(EikoPlanError):
    """Start and goal rotations already agree; no in-place move exists."""


class PlanFailure(EikoPlanError):
    """No grasp sequence covers the task within the recursion limit."""

    def __init__(self, message, deepest_infeasible_pose=None, best_coverage=0.0):
        super().__init__(message)
        self.deepest_infeasible_pose = deepest_infeasible_pose
        self.best_coverage = best_coverage


class BacktrackStall(EikoPlanError):
    """Grid descent stopped at a point that is not the source."""


class SceneMismatch(EikoPlanError):
    """Dataset or checkpoint was produced for a different scene."""


class CheckpointMismatch(EikoPlanError):
    """Checkpoint version or scene hash does not match."""


class FileFormatError(EikoPlanError):
    """A file could not be parsed."""
