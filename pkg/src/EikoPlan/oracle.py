"""
Grid Eikonal solvers: first-order Fast Marching and a Dijkstra cross-check.

Grids are 2D translation slices (x, y at a fixed height and orientation) or
3D translation boxes. Node ``i`` sits at ``origin + h * i``; arrays are
indexed ``[ix, iy(, iz)]``.

.. autosummary::

    ~SpeedGrid
    ~TimeGrid
    ~build_speed_grid
    ~fmm_solve
    ~dijkstra_solve
    ~dijkstra_path
    ~backtrack_path
    ~GridField
    ~FieldComparison
    ~compare_fields
    ~save_grid
    ~load_grid
"""

import dataclasses
import heapq
import itertools
import logging
import math
import pathlib
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import BacktrackStall, FileFormatError, InvalidInput, NoConvergence
from .geom import Pose
from .plan import TimeField, Trajectory, as_time_field, march_bidirectional
from .speed import ground_truth_speed

logger = logging.getLogger(__name__)

FAR, NARROW, FROZEN = 0, 1, 2
GRID_MAGIC = "# EikoPlan grid"
END_HEADER = "END_HEADER"


# ========================================
# Grids
# ========================================


@dataclasses.dataclass(frozen=True, eq=False)
class _Grid:
    values: np.ndarray
    spacing: float
    origin: tuple = None
    orientation: tuple = (0.0, 0.0, 0.0)
    slice_z: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim not in (1, 2, 3):
            raise InvalidInput(f"grids must be 1D, 2D or 3D, got {values.ndim}D")
        if not self.spacing > 0:
            raise InvalidInput(f"grid spacing must be positive, got {self.spacing}")
        origin = (0.0,) * values.ndim if self.origin is None else tuple(float(v) for v in self.origin)
        if len(origin) != values.ndim:
            raise InvalidInput(f"origin {origin} does not match a {values.ndim}D grid")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "orientation", tuple(float(v) for v in self.orientation))

    @property
    def shape(self):
        """Node counts per axis."""
        return self.values.shape

    @property
    def ndim(self):
        """Number of grid axes."""
        return self.values.ndim

    @property
    def axes(self):
        """Node coordinates per axis."""
        return [o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def position(self, index):
        """Coordinates of a node."""
        return np.asarray(self.origin) + self.spacing * np.asarray(index, dtype=float)

    def check_index(self, index):
        """Return ``index`` as a tuple, or raise InvalidInput when out of bounds."""
        index = tuple(int(i) for i in index)
        if len(index) != self.ndim or any(not 0 <= i < n for i, n in zip(index, self.shape)):
            raise InvalidInput(f"node {index} outside grid of shape {self.shape}")
        return index

    def contains(self, point, tol=1e-9):
        """Is the point inside the grid extents?"""
        point = np.asarray(point, dtype=float)
        upper = self.position(np.asarray(self.shape) - 1)
        return bool(np.all(point >= np.asarray(self.origin) - tol) and np.all(point <= upper + tol))

    def nearest_index(self, point):
        """Closest node to a point inside the extents."""
        index = np.rint((np.asarray(point, dtype=float) - self.origin) / self.spacing).astype(int)
        return self.check_index(np.clip(index, 0, np.asarray(self.shape) - 1))

    def pose_point(self, pose):
        """Grid coordinates of a pose's translation (x, y for slices)."""
        return np.asarray(pose.translation[: self.ndim])

    def point_pose(self, point):
        """Pose at grid coordinates with the grid's orientation."""
        xyz = [float(v) for v in point]
        if self.ndim == 2:
            xyz.append(self.slice_z)
        elif self.ndim == 1:
            xyz.extend([0.0, self.slice_z])
        return Pose(tuple(xyz), self.orientation)

    def _interpolator(self, values):
        axes = [a if len(a) > 1 else np.array([a[0], a[0] + self.spacing]) for a in self.axes]
        for axis, n in enumerate(self.shape):
            if n == 1:
                values = np.concatenate([values, values], axis=axis)
        return RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=None)


class SpeedGrid(_Grid):
    """Per-node speeds, all strictly positive and finite."""

    def __post_init__(self):
        super().__post_init__()
        if not (np.all(np.isfinite(self.values)) and np.all(self.values > 0)):
            raise InvalidInput("speed grid values must be finite and > 0")

    def scaled(self, factor):
        """Copy with every speed multiplied by ``factor``."""
        return dataclasses.replace(self, values=self.values * factor)


@dataclasses.dataclass(frozen=True, eq=False)
class TimeGrid(_Grid):
    """Arrival times from one source node, with solver bookkeeping."""

    source: tuple = ()
    state: np.ndarray = None
    freeze_order: np.ndarray = None
    predecessors: np.ndarray = None

    @cached_property
    def _time_interpolator(self):
        return self._interpolator(self.values)

    @cached_property
    def _gradient_interpolators(self):
        if min(self.shape) < 2:
            raise InvalidInput("gradient needs at least two nodes per axis")
        gradients = np.gradient(self.values, self.spacing)
        if self.ndim == 1:
            gradients = [gradients]
        return [self._interpolator(g) for g in gradients]

    @property
    def source_position(self):
        """Coordinates of the source node."""
        return self.position(self.source)

    def interpolate(self, points):
        """Linearly interpolated arrival time at one or more points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self._time_interpolator(points)

    def gradient(self, point):
        """Interpolated central-difference gradient at a point."""
        point = np.atleast_2d(np.asarray(point, dtype=float))
        return np.array([float(g(point)[0]) for g in self._gradient_interpolators])


def build_speed_grid(
    scene,
    object_id,
    orientation=(0.0, 0.0, 0.0),
    spacing=0.01,
    params=None,
    reach=None,
    slice_z=0.0,
    ndim=2,
):
    """
    Ground-truth speeds of ``object_id`` at every node of a translation grid.

    The grid covers the scene bounds (x, y for ``ndim=2`` at height
    ``slice_z``; x, y, z for ``ndim=3``); the object keeps ``orientation``.
    """
    if ndim not in (2, 3):
        raise InvalidInput(f"speed grids are 2D or 3D, got {ndim}")
    lower, upper = scene.bounds.lower[:ndim], scene.bounds.upper[:ndim]
    shape = tuple(int(math.floor((hi - lo) / spacing + 1e-9)) + 1 for lo, hi in zip(lower, upper))
    template = SpeedGrid(np.ones(shape), spacing, lower, orientation, slice_z)
    values = np.empty(shape)
    for index in itertools.product(*(range(n) for n in shape)):
        pose = template.point_pose(template.position(index))
        values[index] = ground_truth_speed(scene, object_id, pose, params, reach)
    logger.info("speed grid %s for %r built", shape, object_id)
    return SpeedGrid(values, spacing, lower, orientation, slice_z)


# ========================================
# Fast Marching
# ========================================


def _axis_offsets(ndim, neighbor_order=None):
    offsets = [(axis, step) for axis in range(ndim) for step in (-1, 1)]
    if neighbor_order is not None:
        offsets = [offsets[i] for i in neighbor_order]
    return offsets


def _upwind_update(times, state, speed, index, spacing):
    """Solve the first-order upwind quadratic at ``index`` from frozen neighbors."""
    shape = times.shape
    mins = []
    for axis in range(times.ndim):
        best = math.inf
        for step in (-1, 1):
            j = index[axis] + step
            if 0 <= j < shape[axis]:
                nb = index[:axis] + (j,) + index[axis + 1 :]
                if state[nb] == FROZEN and times[nb] < best:
                    best = times[nb]
        if best < math.inf:
            mins.append(best)
    mins.sort()
    f = spacing / speed[index]
    t = mins[0] + f
    total, total_sq = mins[0], mins[0] ** 2
    for m, a in enumerate(mins[1:], start=2):
        if t <= a:
            break
        total += a
        total_sq += a * a
        disc = total * total - m * (total_sq - f * f)
        t = (total + math.sqrt(max(disc, 0.0))) / m
    return t


def _seed_times(speed, source, init_radius):
    """Straight-line times of nodes near the source: length * 2 / (S_src + S_node)."""
    h = speed.spacing
    src_pos = speed.position(source)
    s_src = speed.values[source]
    if init_radius is None:
        reach = 1
        limit = math.inf
    else:
        reach = int(math.floor(init_radius / h + 1e-9))
        limit = init_radius + 1e-12
    seeds = {}
    ranges = [range(max(0, s - reach), min(n, s + reach + 1)) for s, n in zip(source, speed.shape)]
    for index in itertools.product(*ranges):
        if index == source:
            continue
        length = float(np.linalg.norm(speed.position(index) - src_pos))
        if length <= limit:
            seeds[index] = length * 2.0 / (s_src + speed.values[index])
    return seeds


def fmm_solve(speed, source, init_radius=None, neighbor_order=None):
    """
    First-order upwind Fast Marching from one source node.

    Args:
        speed: SpeedGrid.
        source: Source node index.
        init_radius: Nodes within this distance (m) of the source start with
            straight-line times using the mean of the source and node speeds.
            None seeds only the immediate neighbor ring (diagonals included).
        neighbor_order: Optional permutation of the 2*ndim axis neighbor
            offsets visited after each freeze.

    Returns:
        TimeGrid with states, freeze order, and the source.
    """
    source = speed.check_index(source)
    values = speed.values
    times = np.full(speed.shape, math.inf)
    state = np.full(speed.shape, FAR, dtype=np.int8)
    freeze_order = np.full(speed.shape, -1, dtype=np.int64)
    offsets = _axis_offsets(speed.ndim, neighbor_order)

    times[source] = 0.0
    state[source] = NARROW
    heap = [(0.0, source)]
    for index, t in _seed_times(speed, source, init_radius).items():
        times[index] = t
        state[index] = NARROW
        heapq.heappush(heap, (t, index))

    count = 0
    last = -math.inf
    while heap:
        t, index = heapq.heappop(heap)
        if state[index] == FROZEN or t > times[index]:
            continue
        assert t >= last - 1e-12, f"freeze order broken at {index}: {t} < {last}"
        last = t
        state[index] = FROZEN
        freeze_order[index] = count
        count += 1
        for axis, step in offsets:
            j = index[axis] + step
            if not 0 <= j < speed.shape[axis]:
                continue
            nb = index[:axis] + (j,) + index[axis + 1 :]
            if state[nb] == FROZEN:
                continue
            candidate = _upwind_update(times, state, values, nb, speed.spacing)
            if candidate < times[nb]:
                times[nb] = candidate
                state[nb] = NARROW
                heapq.heappush(heap, (candidate, nb))
    logger.debug("fmm froze %d nodes from source %s", count, source)
    return TimeGrid(
        times,
        speed.spacing,
        speed.origin,
        speed.orientation,
        speed.slice_z,
        source=source,
        state=state,
        freeze_order=freeze_order,
    )


# ========================================
# Dijkstra
# ========================================


def _stencil(ndim, stencil):
    full = [o for o in itertools.product((-1, 0, 1), repeat=ndim) if any(o)]
    if stencil == "full":
        return full
    if stencil == "extended":
        if ndim != 2:
            raise InvalidInput("the extended stencil is defined for 2D grids only")
        knight = [(a, b) for a in (-2, -1, 1, 2) for b in (-2, -1, 1, 2) if abs(a) != abs(b)]
        return full + knight
    raise InvalidInput(f"unknown stencil {stencil!r}")


def dijkstra_solve(speed, source, stencil="full"):
    """
    Shortest arrival times on the grid graph.

    ``"full"`` connects 8 (2D) or 26 (3D) neighbors; ``"extended"`` adds the
    knight moves for 16 neighbors in 2D. Edge cost is
    ``length * 2 / (S_a + S_b)``. Predecessors are stored as flat indices
    (-1 at the source and unreached nodes).
    """
    source = speed.check_index(source)
    shape = speed.shape
    offsets = [(o, speed.spacing * math.sqrt(sum(c * c for c in o))) for o in _stencil(speed.ndim, stencil)]
    values = speed.values
    times = np.full(shape, math.inf)
    state = np.full(shape, FAR, dtype=np.int8)
    predecessors = np.full(shape, -1, dtype=np.int64)
    freeze_order = np.full(shape, -1, dtype=np.int64)
    times[source] = 0.0
    heap = [(0.0, source)]
    count = 0
    while heap:
        t, index = heapq.heappop(heap)
        if state[index] == FROZEN:
            continue
        state[index] = FROZEN
        freeze_order[index] = count
        count += 1
        flat = np.ravel_multi_index(index, shape)
        for offset, length in offsets:
            nb = tuple(i + o for i, o in zip(index, offset))
            if any(not 0 <= i < n for i, n in zip(nb, shape)) or state[nb] == FROZEN:
                continue
            candidate = t + length * 2.0 / (values[index] + values[nb])
            if candidate < times[nb]:
                times[nb] = candidate
                predecessors[nb] = flat
                state[nb] = NARROW
                heapq.heappush(heap, (candidate, nb))
    return TimeGrid(
        times,
        speed.spacing,
        speed.origin,
        speed.orientation,
        speed.slice_z,
        source=source,
        state=state,
        freeze_order=freeze_order,
        predecessors=predecessors,
    )


def dijkstra_path(times, start):
    """Node-to-source path following Dijkstra predecessors, as a Trajectory."""
    if times.predecessors is None:
        raise InvalidInput("time grid has no predecessors; solve it with dijkstra_solve")
    index = times.check_index(start)
    flat = int(np.ravel_multi_index(index, times.shape))
    source_flat = int(np.ravel_multi_index(times.source, times.shape))
    nodes = [flat]
    while flat != source_flat:
        flat = int(times.predecessors.flat[flat])
        if flat < 0:
            raise InvalidInput(f"node {index} is not connected to the source")
        nodes.append(flat)
    poses = [times.point_pose(times.position(np.unravel_index(f, times.shape))) for f in nodes]
    return Trajectory(tuple(poses), "oracle_backtrack")


# ========================================
# Backtracking
# ========================================


def backtrack_path(times, start, max_iters=None):
    """
    Steepest descent on the interpolated time field from ``start`` to the source.

    Steps are ``h/2`` along the negative normalized gradient; the path ends
    on the source node once within 1.5 cells of it.

    Raises:
        BacktrackStall: Descent stops decreasing T away from the source, or
            the iteration cap is exceeded.
    """
    index = times.check_index(start)
    h = times.spacing
    step = h / 2
    source = times.source_position
    point = times.position(index)
    points = [point]
    if index != times.source:
        if max_iters is None:
            max_iters = 8 * sum(times.shape)
        t_prev = float(times.interpolate(point)[0])
        stalls = 0
        for _ in range(max_iters):
            if np.linalg.norm(point - source) <= 1.5 * h:
                break
            gradient = times.gradient(point)
            norm = float(np.linalg.norm(gradient))
            if norm < 1e-12:
                raise BacktrackStall(f"flat time field at {point} away from the source")
            point = point - step * gradient / norm
            t_now = float(times.interpolate(point)[0])
            stalls = stalls + 1 if t_now >= t_prev else 0
            if stalls >= 4:
                raise BacktrackStall(f"descent stalled at {point} (T={t_now:.6g})")
            t_prev = t_now
            points.append(point)
        else:
            raise BacktrackStall(f"no arrival at the source within {max_iters} steps")
        points.append(source)
    poses = [times.point_pose(p) for p in points]
    return Trajectory(tuple(poses), "oracle_backtrack")


# ========================================
# Learned field vs oracle
# ========================================


class GridField(TimeField):
    """Time field read off a single-source TimeGrid: T(p_s, p_g) = grid(p_g)."""

    def __init__(self, times, w_rot=0.0):
        self.times = times
        self.w_rot = w_rot

    def time(self, p_s, p_g):
        return float(self.times.interpolate(self.times.pose_point(p_g))[0])

    def time_and_gradients(self, p_s, p_g):
        point = self.times.pose_point(p_g)
        grad = np.zeros(6)
        grad[: self.times.ndim] = self.times.gradient(point)
        return self.time(p_s, p_g), np.zeros(6), grad


@dataclasses.dataclass(frozen=True)
class FieldComparison:
    """Relative time errors (and optional path-length ratios) over probes."""

    mean_rel_error: float
    max_rel_error: float
    n_probes: int
    path_ratios: tuple = ()

    @property
    def mean_path_ratio(self):
        """Mean learned/oracle path-length ratio, NaN without paths."""
        finite = [r for r in self.path_ratios if math.isfinite(r)]
        return float(np.mean(finite)) if finite else math.nan


def compare_fields(model, object_cloud, times, probes, with_paths=False, march=None):
    """
    Compare a time field with a single-source oracle grid.

    Every probe ``(p_s, p_g)`` must start at the grid source (within h/2)
    and end inside the grid extents.

    Args:
        model: TimeField or TimeFieldModel.
        object_cloud: Object cloud for a TimeFieldModel.
        times: Single-source TimeGrid.
        probes: Sequence of (p_s, p_g) pose pairs.
        with_paths: Also march each probe and compare its length with the
            oracle backtracked path.
        march: MarchParams used when ``with_paths``.

    Returns:
        :class:`FieldComparison`.
    """
    field = as_time_field(model, object_cloud)
    source = times.source_position
    errors, ratios = [], []
    for p_s, p_g in probes:
        start = times.pose_point(p_s)
        goal = times.pose_point(p_g)
        if np.linalg.norm(start - source) > times.spacing / 2 + 1e-12:
            raise InvalidInput(f"probe start {start} is not the grid source {source}")
        if not times.contains(goal):
            raise InvalidInput(f"probe goal {goal} outside the grid")
        oracle = float(times.interpolate(goal)[0])
        learned = field.time(p_s, p_g)
        if oracle == 0.0:
            errors.append(0.0 if learned == 0.0 else math.inf)
        else:
            errors.append(abs(learned - oracle) / oracle)
        if with_paths:
            ratios.append(_path_ratio(field, times, p_s, p_g, march))
    if not errors:
        return FieldComparison(0.0, 0.0, 0, tuple(ratios))
    return FieldComparison(float(np.mean(errors)), float(np.max(errors)), len(errors), tuple(ratios))


def _path_ratio(field, times, p_s, p_g, march):
    if p_s == p_g:
        return 1.0
    try:
        kwargs = {} if march is None else march.to_dict()
        learned = march_bidirectional(field, None, p_s, p_g, **kwargs)
        oracle = backtrack_path(times, times.nearest_index(times.pose_point(p_g)))
    except (NoConvergence, BacktrackStall) as exc:
        logger.warning("no path ratio for probe %s -> %s: %s", p_s, p_g, exc)
        return math.nan
    return learned.length_m / oracle.length_m if oracle.length_m > 0 else math.nan


# ========================================
# Grid files
# ========================================


def save_grid(path, grid, kind="time"):
    """
    Write a grid: text header lines, ``END_HEADER``, then little-endian
    float64 values in row-major order.
    """
    header = [
        f"{GRID_MAGIC} v1",
        f"kind = {kind}",
        "dims = " + " ".join(str(n) for n in grid.shape),
        f"h = {grid.spacing!r}",
        "origin = " + " ".join(repr(v) for v in grid.origin),
        "orientation = " + " ".join(repr(v) for v in grid.orientation),
        f"slice_z = {grid.slice_z!r}",
    ]
    if isinstance(grid, TimeGrid):
        header.append("source = " + " ".join(str(i) for i in grid.source))
    header.append(END_HEADER)
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())
    return path


def load_grid(path):
    """Read a grid written by :func:`save_grid`."""
    path = pathlib.Path(path)
    raw = path.read_bytes()
    marker = f"\n{END_HEADER}\n".encode("ascii")
    end = raw.find(marker)
    if not raw.startswith(GRID_MAGIC.encode("ascii")) or end < 0:
        raise FileFormatError(f"{path}: not a grid file")
    entries = {}
    for line in raw[:end].decode("ascii").splitlines()[1:]:
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    try:
        dims = tuple(int(v) for v in entries["dims"].split())
        values = np.frombuffer(raw[end + len(marker) :], dtype="<f8").reshape(dims)
        common = dict(
            spacing=float(entries["h"]),
            origin=tuple(float(v) for v in entries["origin"].split()),
            orientation=tuple(float(v) for v in entries["orientation"].split()),
            slice_z=float(entries["slice_z"]),
        )
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if entries.get("kind") == "speed":
        return SpeedGrid(values, **common)
    source = tuple(int(v) for v in entries.get("source", "").split())
    return TimeGrid(values, source=source, **common)
