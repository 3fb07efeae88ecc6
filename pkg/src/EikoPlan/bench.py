"""
Dataset generation, the benchmark harness, and plot-data export.

Parallel work uses a thread pool whose results are gathered in task order,
and each task draws from its own child of one ``numpy.random.SeedSequence``,
so outputs do not depend on the number of threads.

.. autosummary::

    ~generate_dataset
    ~MetricsRecord
    ~BenchmarkSummary
    ~BenchmarkResult
    ~default_grasps
    ~default_ik
    ~run_benchmark
    ~summarize
    ~format_summary
    ~write_metrics_csv
    ~read_metrics_csv
    ~FieldSliceRequest
    ~PolylineRequest
    ~emit_plot_data
"""

import csv
import dataclasses
import logging
import math
import pathlib
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import DEPTH_LIMIT, N_TUPLES, VALIDATION_RESOLUTION
from .dataset import Dataset, DatasetTuple
from .environments import build_scene
from .errors import InvalidInput, NoConvergence, PlanFailure, SceneMismatch
from .geom import Pose
from .net import Checkpoint, load_checkpoint
from .plan import (
    Grasp,
    MarchParams,
    PredicateIK,
    ShellIK,
    TimeField,
    Trajectory,
    as_time_field,
    march_bidirectional,
    omanip,
    validate_trajectory,
)
from .speed import SpeedParams, SphericalShell, ground_truth_speed, sample_valid_pose

logger = logging.getLogger(__name__)

METRICS_COLUMNS = (
    "query",
    "env",
    "object_id",
    "seed",
    "success",
    "planning_time_s",
    "length_m",
    "segments",
    "margin_m",
    "failure",
)
HISTOGRAM_COLUMNS = ("planning_time_s", "length_m", "margin_m")


def _child_rngs(seed, n):
    children = np.random.SeedSequence(seed).spawn(n)
    return [(int(c.generate_state(1)[0]), np.random.default_rng(c)) for c in children]


def _map_ordered(fn, items, threads):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))


# ========================================
# Dataset generation
# ========================================


def generate_dataset(
    env,
    objects=None,
    n_tuples=N_TUPLES,
    seed=0,
    params=None,
    holdout=(),
    threads=1,
    scene=None,
    out=None,
):
    """
    Sample valid pose pairs and label them with ground-truth speeds.

    Args:
        env: EnvSpec of the scene.
        objects: Object ids to sample; the environment's objects when None.
        n_tuples: Number of records (> 0).
        seed: Root seed; record ``i`` uses the ``i``-th spawned child.
        params: SpeedParams, defaults when None.
        holdout: Object ids excluded from the dataset.
        threads: Worker threads.
        scene: Prebuilt scene of ``env`` (built when None).
        out: Optional CSV path to write.

    Returns:
        :class:`~EikoPlan.dataset.Dataset`.
    """
    if n_tuples <= 0:
        raise InvalidInput(f"n_tuples must be positive, got {n_tuples}")
    params = params or SpeedParams()
    scene = scene or build_scene(env)
    reach = env.reachability()
    chosen = [o for o in (objects or env.objects) if o not in set(holdout)]
    if not chosen:
        raise InvalidInput("no objects left after holdout")
    for object_id in chosen:
        scene.object_cloud(object_id)

    def sample(task):
        _, rng = task
        object_id = chosen[int(rng.integers(len(chosen)))]
        p_s, rej_s = sample_valid_pose(scene, object_id, rng, env.sampling)
        p_g, rej_g = sample_valid_pose(scene, object_id, rng, env.sampling)
        record = DatasetTuple(
            object_id,
            p_s,
            p_g,
            ground_truth_speed(scene, object_id, p_s, params, reach),
            ground_truth_speed(scene, object_id, p_g, params, reach),
        )
        return record, rej_s + rej_g

    started = time.perf_counter()
    results = _map_ordered(sample, _child_rngs(seed, n_tuples), threads)
    rejections = sum(r for _, r in results)
    logger.info(
        "generated %d tuples for %r in %.2f s",
        n_tuples,
        env.name,
        time.perf_counter() - started,
    )
    logger.debug("%d rejected pose samples (%.2f per accepted pose)", rejections, rejections / (2 * n_tuples))
    header = {
        "env": env.to_dict(),
        "holdout": sorted(holdout),
        "n_tuples": n_tuples,
        "objects": chosen,
        "reach": reach.to_dict(),
        "scene_hash": scene.scene_hash,
        "seed": seed,
        "speed_params": params.to_dict(),
    }
    dataset = Dataset([r for r, _ in results], header)
    if out is not None:
        dataset.save(out)
    return dataset


# ========================================
# Benchmark
# ========================================


@dataclasses.dataclass(frozen=True)
class MetricsRecord:
    """Outcome of one benchmark query; length and margin only on success."""

    query: int
    env: str
    object_id: str
    seed: int
    success: bool
    planning_time_s: float
    length_m: float = None
    segments: int = 0
    margin_m: float = None
    failure: str = ""

    def row(self):
        """CSV row; missing values are empty strings."""
        row = []
        for column in METRICS_COLUMNS:
            value = getattr(self, column)
            if value is None:
                row.append("")
            elif isinstance(value, bool):
                row.append("1" if value else "0")
            elif isinstance(value, float):
                row.append(repr(value))
            else:
                row.append(str(value))
        return row


@dataclasses.dataclass(frozen=True)
class BenchmarkSummary:
    """Mean ± std (population) of time, length and margin, plus success rate."""

    n_queries: int = 0
    success_rate: float = 0.0
    time_mean: float = 0.0
    time_std: float = 0.0
    length_mean: float = 0.0
    length_std: float = 0.0
    margin_mean: float = 0.0
    margin_std: float = 0.0

    def to_dict(self):
        """Plain dict."""
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class BenchmarkResult:
    """Per-query records and their summary."""

    records: tuple
    summary: BenchmarkSummary


def _mean_std(values):
    values = [v for v in values if v is not None and math.isfinite(v)]
    if not values:
        return 0.0, 0.0
    return float(np.mean(values)), float(np.std(values))


def summarize(records):
    """
    Summary over records: planning time over all queries, length and margin
    over successful ones.
    """
    records = list(records)
    if not records:
        return BenchmarkSummary()
    successes = [r for r in records if r.success]
    time_mean, time_std = _mean_std([r.planning_time_s for r in records])
    length_mean, length_std = _mean_std([r.length_m for r in successes])
    margin_mean, margin_std = _mean_std([r.margin_m for r in successes])
    return BenchmarkSummary(
        len(records),
        len(successes) / len(records),
        time_mean,
        time_std,
        length_mean,
        length_std,
        margin_mean,
        margin_std,
    )


def format_summary(summary):
    """One-line human summary."""
    return (
        f"queries {summary.n_queries}"
        f" | time {summary.time_mean:.4f} ± {summary.time_std:.4f} s"
        f" | length {summary.length_mean:.4f} ± {summary.length_std:.4f} m"
        f" | success {100 * summary.success_rate:.1f}%"
        f" | margin {summary.margin_mean:.4f} ± {summary.margin_std:.4f} m"
    )


def write_metrics_csv(path, records):
    """Write records (header always present)."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for record in records:
            writer.writerow(record.row())
    return path


def read_metrics_csv(path):
    """Read records written by :func:`write_metrics_csv`."""
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"metrics file not found: {path}")

    def optional(text):
        return float(text) if text != "" else None

    records = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            records.append(
                MetricsRecord(
                    int(row["query"]),
                    row["env"],
                    row["object_id"],
                    int(row["seed"]),
                    row["success"] == "1",
                    float(row["planning_time_s"]),
                    optional(row["length_m"]),
                    int(row["segments"]),
                    optional(row["margin_m"]),
                    row["failure"],
                )
            )
    return records


def default_grasps():
    """Two generic grasps: from the top (preferred) and from the side."""
    return [
        Grasp("top", Pose((0.0, 0.0, 0.04)), 0.9),
        Grasp("side", Pose((0.0, 0.05, 0.0), (0.0, 0.0, 1.5707963267948966)), 0.6),
    ]


def default_ik(env):
    """Shell IK for environments with a shell gate, bounds-only IK otherwise."""
    reach = env.reachability()
    if isinstance(reach, SphericalShell):
        return ShellIK(reach, env.bounds)
    return PredicateIK(lambda pose, grasp: env.bounds.contains(pose.translation))


def _resolve_field(checkpoint, scene):
    if isinstance(checkpoint, TimeField):
        return checkpoint
    if isinstance(checkpoint, (str, pathlib.Path)):
        return load_checkpoint(checkpoint, scene_hash=scene.scene_hash).model
    if isinstance(checkpoint, Checkpoint):
        if checkpoint.scene_hash != scene.scene_hash:
            raise SceneMismatch(
                f"checkpoint trained on scene {checkpoint.scene_hash!r},"
                f" benchmark scene is {scene.scene_hash!r}"
            )
        return checkpoint.model
    return checkpoint


def run_benchmark(
    checkpoint,
    env,
    n_queries,
    seed=0,
    scene=None,
    objects=None,
    grasps=None,
    ik=None,
    march=None,
    depth_limit=DEPTH_LIMIT,
    resolution_m=VALIDATION_RESOLUTION,
    threads=1,
    out_csv=None,
):
    """
    Plan random valid start/goal pairs and record success, time, length, margin.

    A query succeeds when :func:`~EikoPlan.plan.omanip` returns a plan and
    the whole plan validates collision-free at ``resolution_m``.

    Args:
        checkpoint: Checkpoint path, loaded :class:`~EikoPlan.net.Checkpoint`,
            TimeFieldModel, or TimeField. Paths and checkpoints must match
            the scene hash.
        env: EnvSpec.
        n_queries: Number of queries (>= 0).
        seed: Root seed; query ``i`` uses the ``i``-th spawned child.
        scene: Prebuilt scene of ``env`` (built when None).
        objects: Object ids to query (any catalog object, held-out included).
        grasps: Grasp list; :func:`default_grasps` when None.
        ik: IKProvider; :func:`default_ik` when None.
        march: MarchParams.
        depth_limit: Regrasp recursion limit.
        resolution_m: Validation densification.
        threads: Worker threads.
        out_csv: Optional metrics CSV path.

    Returns:
        :class:`BenchmarkResult`.
    """
    if n_queries < 0:
        raise InvalidInput("n_queries must be >= 0")
    scene = scene or build_scene(env)
    model = _resolve_field(checkpoint, scene)
    objects = list(objects or env.objects)
    grasps = grasps or default_grasps()
    ik = ik or default_ik(env)
    march = march or MarchParams()

    def query(task):
        index, (child_seed, rng) = task
        object_id = objects[int(rng.integers(len(objects)))]
        p_s = sample_valid_pose(scene, object_id, rng, env.sampling).pose
        p_g = sample_valid_pose(scene, object_id, rng, env.sampling).pose
        started = time.perf_counter()
        common = dict(query=index, env=env.name, object_id=object_id, seed=child_seed)
        try:
            plan = omanip(model, scene, object_id, p_s, p_g, grasps, ik, depth_limit, march)
        except (PlanFailure, NoConvergence) as exc:
            logger.debug("query %d failed: %s", index, exc)
            failure = "plan_failure" if isinstance(exc, PlanFailure) else "no_convergence"
            return MetricsRecord(success=False, planning_time_s=time.perf_counter() - started, failure=failure, **common)
        report = validate_trajectory(scene, object_id, Trajectory(tuple(plan.poses)), resolution_m)
        if report.collision:
            return MetricsRecord(
                success=False,
                planning_time_s=plan.plan_time_s,
                segments=len(plan.segments),
                failure="collision",
                **common,
            )
        return MetricsRecord(
            success=True,
            planning_time_s=plan.plan_time_s,
            length_m=plan.total_length_m,
            segments=len(plan.segments),
            margin_m=report.min_distance,
            **common,
        )

    records = tuple(_map_ordered(query, list(enumerate(_child_rngs(seed, n_queries))), threads))
    summary = summarize(records)
    logger.info("benchmark %r: %s", env.name, format_summary(summary))
    if out_csv is not None:
        write_metrics_csv(out_csv, records)
    return BenchmarkResult(records, summary)


# ========================================
# Plot data
# ========================================


@dataclasses.dataclass(frozen=True)
class FieldSliceRequest:
    """
    Sample T over an x-y grid with one pose held fixed.

    With ``vary="goal"`` each cell holds ``T(fixed, cell)``; with
    ``vary="start"`` it holds ``T(cell, fixed)``. Cells take the fixed
    pose's height and rotation. ``oracle`` adds a column read off a TimeGrid.
    """

    name: str
    object_id: str
    fixed: Pose
    vary: str = "goal"
    spacing: float = 0.01
    oracle: object = None


@dataclasses.dataclass(frozen=True)
class PolylineRequest:
    """March one query and dump its poses."""

    name: str
    object_id: str
    p_s: Pose
    p_g: Pose


def _write_rows(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _histograms(records, out_dir, bins):
    paths = []
    for column in HISTOGRAM_COLUMNS:
        values = [getattr(r, column) for r in records]
        values = np.array([v for v in values if v is not None and math.isfinite(v)], dtype=float)
        if values.size:
            counts, edges = np.histogram(values, bins=bins)
        else:
            counts, edges = np.zeros(0, dtype=int), np.zeros(1)
        rows = [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))]
        paths.append(_write_rows(out_dir / f"hist_{column}.csv", ("bin_low", "bin_high", "count"), rows))
    return paths


def _field_slice(model, scene, request, out_dir):
    if request.vary not in ("goal", "start"):
        raise InvalidInput(f"vary must be 'goal' or 'start', got {request.vary!r}")
    field = as_time_field(model, None if isinstance(model, TimeField) else scene.object_cloud(request.object_id))
    lower, upper = scene.bounds.lower, scene.bounds.upper
    axes = [
        lower[i] + request.spacing * np.arange(int(math.floor((upper[i] - lower[i]) / request.spacing + 1e-9)) + 1)
        for i in range(2)
    ]
    z = request.fixed.translation[2]
    columns = ["x", "y", "time"] + (["oracle_time"] if request.oracle is not None else [])
    rows = []
    for x in axes[0]:
        for y in axes[1]:
            cell = Pose((float(x), float(y), z), request.fixed.rotation)
            pair = (request.fixed, cell) if request.vary == "goal" else (cell, request.fixed)
            row = [float(x), float(y), field.time(*pair)]
            if request.oracle is not None:
                row.append(float(request.oracle.interpolate([x, y][: request.oracle.ndim])[0]))
            rows.append(row)
    return _write_rows(out_dir / f"slice_{request.name}.csv", columns, rows)


def _polyline(model, scene, request, out_dir, march):
    cloud = None if isinstance(model, TimeField) else scene.object_cloud(request.object_id)
    traj = march_bidirectional(model, cloud, request.p_s, request.p_g, march.eta, march.d_s, march.max_iters)
    rows = [list(p.as_vector()) for p in traj.poses]
    return _write_rows(out_dir / f"path_{request.name}.csv", ("x", "y", "z", "roll", "pitch", "yaw"), rows)


def emit_plot_data(metrics_csv, out_dir, model=None, scene=None, slices=(), polylines=(), bins=10, march=None):
    """
    Write plain-CSV plot inputs: metric histograms, field slices, polylines.

    Args:
        metrics_csv: Benchmark metrics file (must exist).
        out_dir: Output directory (created).
        model: TimeFieldModel or TimeField for slices and polylines.
        scene: Scene for bounds and object clouds.
        slices: :class:`FieldSliceRequest` items.
        polylines: :class:`PolylineRequest` items.
        bins: Histogram bin count.
        march: MarchParams for polylines.

    Returns:
        List of written paths.
    """
    records = read_metrics_csv(metrics_csv)
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if (slices or polylines) and (model is None or scene is None):
        raise InvalidInput("field slices and polylines need a model and a scene")
    paths = _histograms(records, out_dir, bins)
    paths += [_field_slice(model, scene, request, out_dir) for request in slices]
    march = march or MarchParams()
    paths += [_polyline(model, scene, request, out_dir, march) for request in polylines]
    logger.info("wrote %d plot-data files to %s", len(paths), out_dir)
    return paths
