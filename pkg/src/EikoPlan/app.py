#!/usr/bin/env python

"""
EikoPlan: learned travel-time fields for manipulation and regrasp planning.

.. autosummary::

    ~command_line_interface
    ~main
"""

import argparse
import json
import logging
import sys
import time

from . import (
    BATCH_SIZE,
    D_MAX,
    D_MIN,
    D_S,
    DEPTH_LIMIT,
    EPOCHS,
    EPSILON,
    ETA,
    GRID_SPACING,
    LEARNING_RATE,
    MAX_ITERS,
    N_TUPLES,
    S_CONST,
)
from .errors import EikoPlanError, NoConvergence, PlanFailure
from .utils import parse_floats

logger = None  # to be set by main() from command line option

EXIT_OK = 0
EXIT_PLAN_FAILURE = 2
EXIT_CONFIG_ERROR = 3


class Options:
    """
    Resolve option values: command line, then config file, then settings group, then default.

    Parser defaults are None so an unset flag can fall back to the later layers.
    """

    def __init__(self, args, settings, file_values=None):
        self.args = args
        self.settings = settings
        self.file_values = dict(file_values or {})

    def with_file(self, values):
        """Copy that consults ``values`` (a config file) right after the command line."""
        return Options(self.args, self.settings, values)

    def get(self, group, name, default, kind=float):
        """Value of option ``name`` (settings key ``group/name``)."""
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if self.file_values.get(name) is not None:
            return self.file_values[name]
        if self.settings is not None:
            stored = self.settings.defaults(group).get(name)
            if stored not in (None, ""):
                if kind is bool:
                    return str(stored).lower() not in ("false", "0", "")
                return kind(stored)
        return default


def _float_pair(value):
    """Two floats from a settings value, stored as ``"a, b"`` or a list."""
    if isinstance(value, (list, tuple)):
        value = " ".join(str(v) for v in value)
    return parse_floats(value, 2)


def _root_seed(args):
    return 0 if args.seed is None else args.seed


# name, settings type, built-in default (None: derived by TrainConfig)
TRAIN_OPTIONS = (
    ("batch_size", int, BATCH_SIZE),
    ("learning_rate", float, LEARNING_RATE),
    ("epsilon", float, EPSILON),
    ("regularizer", str, "dirichlet"),
    ("alpha_init", float, 0.5),
    ("alpha_stop", float, 1.0),
    ("warmup_epochs", int, None),
    ("delta_per_epoch", float, None),
    ("delta_halving_epoch", int, None),
    ("betas", _float_pair, (0.9, 0.999)),
    ("adam_eps", float, 1e-8),
    ("dirichlet_both_endpoints", bool, False),
)


# ========================================
# Subcommands
# ========================================


def _speed_params(opts):
    from .speed import SpeedParams

    return SpeedParams(
        opts.get("speed", "s_const", S_CONST),
        opts.get("speed", "d_min", D_MIN),
        opts.get("speed", "d_max", D_MAX),
    )


def _march_params(opts):
    from .plan import MarchParams

    return MarchParams(
        opts.get("plan", "eta", ETA),
        opts.get("plan", "d_s", D_S),
        opts.get("plan", "max_iters", MAX_ITERS, int),
    )


def cmd_gen_data(args, opts):
    """Generate a training dataset."""
    from .bench import generate_dataset
    from .environments import get_env

    env = get_env(args.env)
    started = time.perf_counter()
    dataset = generate_dataset(
        env,
        objects=args.objects,
        n_tuples=opts.get("bench", "n_tuples", N_TUPLES, int),
        seed=_root_seed(args),
        params=_speed_params(opts),
        holdout=args.holdout or (),
        threads=args.threads,
        out=args.out,
    )
    print(f"{len(dataset)} tuples written to {args.out} in {time.perf_counter() - started:.2f} s")


def _train_config(args, opts):
    """TrainConfig from flags, the ``--config`` file, settings, and defaults, in that order."""
    from .train import TrainConfig, alpha_schedule_preset
    from .utils import read_json_object

    if args.config:
        opts = opts.with_file(read_json_object(args.config))
    epochs = opts.get("train", "epochs", EPOCHS, int)
    preset = alpha_schedule_preset(args.schedule or "default", epochs)
    fields = {"epochs": epochs}
    for name, kind, default in TRAIN_OPTIONS:
        if args.schedule and name in preset and getattr(args, name, None) is None:
            # a schedule named on the command line outranks the file and settings
            fields[name] = preset[name]
            continue
        value = opts.get("train", name, preset.get(name, default), kind)
        if value is not None:
            fields[name] = value
    if args.seed is not None:
        fields["rng_seed"] = args.seed
    else:
        fields["rng_seed"] = opts.get("train", "rng_seed", 0, int)
    return TrainConfig.from_dict(fields)


def cmd_train(args, opts):
    """Train a time field on a dataset."""
    from .dataset import Dataset
    from .environments import EnvSpec, build_scene
    from .net import NetConfig, TimeFieldModel, save_checkpoint
    from .train import train
    from .user_settings import get_settings
    from .utils import load_scene

    config = _train_config(args, opts)
    dataset = Dataset.load(args.dataset)
    if args.scene:
        scene, _ = load_scene(args.scene)
    elif "env" in dataset.header:
        scene = build_scene(EnvSpec.from_dict(dataset.header["env"]))
    else:
        raise EikoPlanError("dataset names no environment; pass --scene")

    model = TimeFieldModel(NetConfig(seed=config.rng_seed))
    _, records = train(model, dataset, scene, config, log_path=args.log_csv)
    metadata = {
        "train_config": config.to_dict(),
        "dataset": str(args.dataset),
        "env": dataset.header.get("env"),
        "final_loss": records[-1].mean_loss if records else None,
    }
    save_checkpoint(args.out, model, dataset.header.get("speed_params"), scene.scene_hash, metadata)
    get_settings(args.settings).addRecentCheckpoint(args.out)
    print(f"checkpoint written to {args.out}")


def _checkpoint_scene(args, checkpoint_path):
    """Scene named on the command line, else the one stored in the checkpoint."""
    from .environments import EnvSpec, build_scene
    from .net import load_checkpoint
    from .utils import load_scene

    if args.scene:
        scene, env = load_scene(args.scene)
        return load_checkpoint(checkpoint_path, scene_hash=scene.scene_hash), scene, env
    checkpoint = load_checkpoint(checkpoint_path)
    env_data = checkpoint.metadata.get("env")
    if not env_data:
        raise EikoPlanError("checkpoint names no environment; pass --scene")
    env = EnvSpec.from_dict(env_data)
    scene = build_scene(env)
    if scene.scene_hash != checkpoint.scene_hash:
        raise EikoPlanError("rebuilt scene does not match the checkpoint")
    return checkpoint, scene, env


def cmd_plan(args, opts):
    """Plan one regrasp task."""
    from .bench import default_grasps, default_ik
    from .plan import PredicateIK, load_grasps, omanip
    from .user_settings import get_settings
    from .utils import parse_pose, write_json

    checkpoint, scene, env = _checkpoint_scene(args, args.checkpoint)
    get_settings(args.settings).addRecentCheckpoint(args.checkpoint)
    grasps = load_grasps(args.grasps) if args.grasps else default_grasps()
    if env is not None:
        ik = default_ik(env)
    else:
        ik = PredicateIK(lambda pose, grasp: scene.bounds.contains(pose.translation))
    result = omanip(
        checkpoint.model,
        scene,
        args.object,
        parse_pose(args.start),
        parse_pose(args.goal),
        grasps,
        ik,
        opts.get("plan", "depth_limit", DEPTH_LIMIT, int),
        _march_params(opts),
    )
    data = result.to_dict()
    if args.out:
        write_json(args.out, data)
    print(json.dumps(data, indent=2))


def cmd_bench(args, opts):
    """Run the benchmark harness."""
    from .bench import format_summary, run_benchmark
    from .environments import build_scene, get_env
    from .utils import write_json

    env = get_env(args.env)
    scene = build_scene(env)
    result = run_benchmark(
        args.checkpoint,
        env,
        opts.get("bench", "queries", 100, int),
        seed=_root_seed(args),
        scene=scene,
        objects=args.objects,
        march=_march_params(opts),
        depth_limit=opts.get("plan", "depth_limit", DEPTH_LIMIT, int),
        threads=args.threads,
        out_csv=args.out,
    )
    if args.summary:
        write_json(args.summary, result.summary.to_dict())
    print(format_summary(result.summary))


def cmd_oracle(args, opts):
    """Solve the grid oracle on one slice."""
    from .oracle import build_speed_grid, dijkstra_solve, fmm_solve, save_grid
    from .utils import load_scene, parse_floats, parse_orientation

    scene, env = load_scene(args.scene)
    reach = env.reachability() if env is not None else None
    speed = build_speed_grid(
        scene,
        args.object,
        parse_orientation(args.orientation),
        args.h,
        _speed_params(opts),
        reach,
        args.slice_z,
    )
    source = speed.nearest_index(parse_floats(args.source, 2))
    if args.method == "fmm":
        times = fmm_solve(speed, source, init_radius=args.init_radius)
    else:
        times = dijkstra_solve(speed, source, args.stencil)
    save_grid(args.out, times, kind="time")
    if args.speed_out:
        save_grid(args.speed_out, speed, kind="speed")
    print(f"{args.method} grid {times.shape} written to {args.out}")


def cmd_plot_data(args, opts):
    """Export plot-ready CSV files."""
    from .bench import FieldSliceRequest, emit_plot_data
    from .oracle import load_grid
    from .utils import parse_pose

    model = scene = None
    slices = ()
    if args.checkpoint:
        checkpoint, scene, _ = _checkpoint_scene(args, args.checkpoint)
        model = checkpoint.model
        if args.object and args.fixed:
            oracle = load_grid(args.oracle) if args.oracle else None
            slices = (
                FieldSliceRequest(
                    args.name, args.object, parse_pose(args.fixed), args.vary, args.spacing, oracle
                ),
            )
    paths = emit_plot_data(args.metrics, args.out, model, scene, slices, bins=args.bins)
    for path in paths:
        print(path)


# ========================================
# Parser
# ========================================


def _add_speed_flags(parser):
    parser.add_argument("--s-const", dest="s_const", type=float, help=f"Speed cap (default {S_CONST})")
    parser.add_argument("--d-min", dest="d_min", type=float, help=f"Lower clearance clip, m (default {D_MIN})")
    parser.add_argument("--d-max", dest="d_max", type=float, help=f"Upper clearance clip, m (default {D_MAX})")


def _add_march_flags(parser):
    parser.add_argument("--eta", type=float, help=f"Marching step factor (default {ETA})")
    parser.add_argument("--d-s", dest="d_s", type=float, help=f"Meeting distance (default {D_S})")
    parser.add_argument("--max-iters", dest="max_iters", type=int, help=f"Iteration cap (default {MAX_ITERS})")
    parser.add_argument("--depth-limit", dest="depth_limit", type=int, help=f"Regrasp depth (default {DEPTH_LIMIT})")


def command_line_interface(argv=None):
    """Parse command-line arguments."""
    from . import __version__

    doc = __doc__.strip().splitlines()[0]
    parser = argparse.ArgumentParser(prog="EikoPlan", description=doc)

    # fmt: off
    try:
        choices = [k.lower() for k in logging.getLevelNamesMapping()]
    except AttributeError:
        choices = "critical fatal error warning info debug".split()  # Py < 3.11
    parser.add_argument(
        "--log",
        default=None,
        help=(
            "Provide logging level. "
            "Example '--log debug'. "
            "Default level: 'warning'"),
        choices=choices,
    )
    # fmt: on
    parser.add_argument("--verbose", action="count", default=0, help="Log at info (-vv style repeat: debug)")
    parser.add_argument("--seed", type=int, default=None, help="Root random seed (default 0)")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads")
    parser.add_argument("--settings", default=None, help="Settings INI file (default: user settings)")
    parser.add_argument("-v", "--version", action="version", version=__version__)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help=cmd_gen_data.__doc__)
    p.add_argument("--env", required=True, help="Catalog environment")
    p.add_argument("--n", dest="n_tuples", type=int, help=f"Number of tuples (default {N_TUPLES})")
    p.add_argument("--objects", nargs="+", help="Object ids (default: all of the environment)")
    p.add_argument("--holdout", nargs="+", help="Object ids to leave out")
    p.add_argument("--out", required=True, help="Dataset CSV")
    _add_speed_flags(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help=cmd_train.__doc__)
    p.add_argument("--scene", help="Environment name or scene file (default: from the dataset)")
    p.add_argument("--dataset", required=True, help="Dataset CSV")
    p.add_argument("--config", help="JSON file of TrainConfig fields")
    p.add_argument("--out", required=True, help="Checkpoint file")
    p.add_argument("--log-csv", dest="log_csv", help="Per-epoch training log CSV")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epsilon", type=float, help=f"Regularizer weight (default {EPSILON})")
    p.add_argument("--regularizer", choices=("dirichlet", "viscosity", "none"))
    p.add_argument("--schedule", choices=("default", "staged"), help="Named alpha schedule; overrides the file and settings")
    p.add_argument("--alpha-init", dest="alpha_init", type=float)
    p.add_argument("--alpha-stop", dest="alpha_stop", type=float)
    p.add_argument("--warmup-epochs", dest="warmup_epochs", type=int)
    p.add_argument("--delta-per-epoch", dest="delta_per_epoch", type=float)
    p.add_argument("--delta-halving-epoch", dest="delta_halving_epoch", type=int)
    p.add_argument("--betas", nargs=2, type=float, metavar=("B1", "B2"), help="Adam betas (default 0.9 0.999)")
    p.add_argument("--adam-eps", dest="adam_eps", type=float, help="Adam epsilon (default 1e-8)")
    p.add_argument(
        "--dirichlet-both-endpoints", dest="dirichlet_both_endpoints", action="store_true", default=None
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help=cmd_plan.__doc__)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", help="Environment name or scene file (default: from the checkpoint)")
    p.add_argument("--object", required=True)
    p.add_argument("--start", required=True, help='"x y z roll pitch yaw"')
    p.add_argument("--goal", required=True, help='"x y z roll pitch yaw"')
    p.add_argument("--grasps", help="Grasp list file")
    p.add_argument("--out", help="Plan JSON file")
    _add_march_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help=cmd_bench.__doc__)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--queries", type=int, help="Number of queries (default 100)")
    p.add_argument("--objects", nargs="+")
    p.add_argument("--out", required=True, help="Metrics CSV")
    p.add_argument("--summary", help="Summary JSON")
    _add_march_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="Grid oracle")
    oracle_sub = p.add_subparsers(dest="oracle_command", required=True)
    p = oracle_sub.add_parser("solve", help=cmd_oracle.__doc__)
    p.add_argument("--scene", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--orientation", default="0 0 0", help='"roll pitch yaw"')
    p.add_argument("--h", type=float, default=GRID_SPACING, help="Grid spacing, m")
    p.add_argument("--source", required=True, help='"x y"')
    p.add_argument("--slice-z", dest="slice_z", type=float, default=0.0)
    p.add_argument("--method", choices=("fmm", "dijkstra"), default="fmm")
    p.add_argument("--stencil", choices=("full", "extended"), default="full")
    p.add_argument("--init-radius", dest="init_radius", type=float)
    p.add_argument("--out", required=True, help="Time grid file")
    p.add_argument("--speed-out", dest="speed_out", help="Speed grid file")
    _add_speed_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plot-data", help=cmd_plot_data.__doc__)
    p.add_argument("--metrics", required=True, help="Benchmark metrics CSV")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--checkpoint")
    p.add_argument("--scene")
    p.add_argument("--object")
    p.add_argument("--fixed", help='Fixed pose of the field slice, "x y z r p y"')
    p.add_argument("--vary", choices=("goal", "start"), default="goal")
    p.add_argument("--spacing", type=float, default=GRID_SPACING)
    p.add_argument("--name", default="field")
    p.add_argument("--oracle", help="Time grid file paired with the slice")
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(func=cmd_plot_data)

    return parser.parse_args(argv)


def main(argv=None):
    """Command-line entry point; returns the exit code."""
    global logger

    options = command_line_interface(argv)

    level = options.log or {0: "warning", 1: "info"}.get(options.verbose, "debug")
    logging.basicConfig(level=level.upper())
    logger = logging.getLogger(__name__)
    logger.info("Logging level: %s", level)

    # Silence noisy third-party loggers
    for package in "PyQt5 torch matplotlib".split():
        logging.getLogger(package).setLevel(logging.WARNING)

    try:
        from .user_settings import get_settings

        options.func(options, Options(options, get_settings(options.settings)))
    except (PlanFailure, NoConvergence) as exc:
        logger.error("%s", exc)
        return EXIT_PLAN_FAILURE
    except (EikoPlanError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
