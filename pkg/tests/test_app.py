"""Tests for the command-line entry point and its helpers."""

import csv
import json

import pytest
import torch

from EikoPlan.app import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_PLAN_FAILURE, main
from EikoPlan.dataset import Dataset
from EikoPlan.environments import build_scene, get_env
from EikoPlan.errors import InvalidInput
from EikoPlan.geom import Pose
from EikoPlan.net import load_checkpoint, save_checkpoint
from EikoPlan.oracle import TimeGrid, load_grid
from EikoPlan.user_settings import get_settings
from EikoPlan.utils import load_scene, parse_floats, parse_pose


@pytest.fixture
def settings_args(tmp_path):
    return ["--settings", str(tmp_path / "settings.ini")]


@pytest.fixture
def free_checkpoint(tmp_path, tiny_model):
    env = get_env("free_space")
    tiny_model.set_constant_head(1.0)
    path = tmp_path / "free.pt"
    save_checkpoint(path, tiny_model, {"s_const": 1.0}, build_scene(env).scene_hash, {"env": env.to_dict()})
    return path


def test_parse_helpers():
    assert parse_floats("0.1, 0.2 3", 3) == (0.1, 0.2, 3.0)
    assert parse_pose("1 2 3 0 0 0.5") == Pose((1.0, 2.0, 3.0), (0.0, 0.0, 0.5))
    with pytest.raises(InvalidInput):
        parse_floats("1 2", 3)
    with pytest.raises(InvalidInput):
        parse_floats("1 two 3", 3)


def test_load_scene(tmp_path):
    scene, env = load_scene("free_space")
    assert env.name == "free_space"
    assert scene.name == "free_space"
    with pytest.raises(FileNotFoundError):
        load_scene(tmp_path / "nothing.scene")


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert capsys.readouterr().out.strip()


def test_gen_data(tmp_path, settings_args):
    out = tmp_path / "data.csv"
    code = main(settings_args + ["gen-data", "--env", "free_space", "--n", "5", "--out", str(out)])
    assert code == EXIT_OK
    dataset = Dataset.load(out)
    assert len(dataset) == 5
    assert dataset.header["env"]["name"] == "free_space"


def test_missing_dataset_is_a_config_error(tmp_path, settings_args):
    argv = ["train", "--dataset", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m.pt")]
    assert main(settings_args + argv) == EXIT_CONFIG_ERROR


def test_unknown_environment_is_a_config_error(tmp_path, settings_args):
    argv = ["gen-data", "--env", "kitchen", "--out", str(tmp_path / "d.csv")]
    assert main(settings_args + argv) == EXIT_CONFIG_ERROR


def test_oracle_solve(tmp_path, settings_args):
    out = tmp_path / "times.grid"
    speed_out = tmp_path / "speed.grid"
    argv = [
        "oracle", "solve",
        "--scene", "free_space",
        "--object", "box",
        "--h", "0.1",
        "--source", "0 0",
        "--out", str(out),
        "--speed-out", str(speed_out),
    ]
    assert main(settings_args + argv) == EXIT_OK
    times = load_grid(out)
    assert isinstance(times, TimeGrid)
    assert times.shape == (11, 11)
    assert times.values[times.source] == 0.0
    assert times.values[10, 5] == pytest.approx(0.5)
    assert load_grid(speed_out).values.min() == 1.0


def test_plan(tmp_path, settings_args, free_checkpoint, capsys):
    out = tmp_path / "plan.json"
    argv = [
        "plan",
        "--checkpoint", str(free_checkpoint),
        "--object", "box",
        "--start", "-0.2 0 0 0 0 0",
        "--goal", "0.2 0.1 0 0 0 0",
        "--out", str(out),
    ]
    assert main(settings_args + argv) == EXIT_OK
    data = json.loads(out.read_text())
    assert len(data["segments"]) == 1
    assert data["total_length_m"] == pytest.approx((0.4**2 + 0.1**2) ** 0.5, rel=1e-6)
    assert json.loads(capsys.readouterr().out) == data
    recent = get_settings(settings_args[1]).getRecentCheckpoints()
    assert recent[0] == str(free_checkpoint)


def test_plan_failure_exit_code(settings_args, free_checkpoint):
    # above the planar workspace, so no grasp is ever reachable
    argv = [
        "plan",
        "--checkpoint", str(free_checkpoint),
        "--scene", "free_space",
        "--object", "box",
        "--start", "0 0 0.3 0 0 0",
        "--goal", "0 0 0.3 0 0 0",
    ]
    assert main(settings_args + argv) == EXIT_PLAN_FAILURE


def test_checkpoint_for_another_scene(settings_args, free_checkpoint):
    argv = [
        "plan",
        "--checkpoint", str(free_checkpoint),
        "--scene", "u_tunnel",
        "--object", "box",
        "--start", "0 0 0 0 0 0",
        "--goal", "0.1 0 0 0 0 0",
    ]
    assert main(settings_args + argv) == EXIT_CONFIG_ERROR


def test_bench_and_plot_data(tmp_path, settings_args, free_checkpoint):
    metrics = tmp_path / "metrics.csv"
    summary = tmp_path / "summary.json"
    argv = [
        "bench",
        "--checkpoint", str(free_checkpoint),
        "--env", "free_space",
        "--queries", "3",
        "--out", str(metrics),
        "--summary", str(summary),
    ]
    assert main(settings_args + argv) == EXIT_OK
    assert json.loads(summary.read_text())["n_queries"] == 3
    plots = tmp_path / "plots"
    argv = [
        "plot-data",
        "--metrics", str(metrics),
        "--out", str(plots),
        "--checkpoint", str(free_checkpoint),
        "--object", "box",
        "--fixed", "0 0 0 0 0 0",
        "--spacing", "0.25",
    ]
    assert main(settings_args + argv) == EXIT_OK
    assert (plots / "slice_field.csv").exists()
    assert (plots / "hist_length_m.csv").exists()


@pytest.fixture
def free_dataset_file(tmp_path, settings_args):
    path = tmp_path / "data.csv"
    assert main(settings_args + ["gen-data", "--env", "free_space", "--n", "8", "--out", str(path)]) == EXIT_OK
    return path


def train_argv(dataset, out, *extra):
    return ["train", "--dataset", str(dataset), "--out", str(out), *extra]


def test_train_option_precedence(tmp_path, settings_args, free_dataset_file):
    settings = get_settings(settings_args[1])
    settings.setKey("train/epsilon", "0.2")
    settings.setKey("train/learning_rate", "0.01")
    config = tmp_path / "train.json"
    config.write_text(json.dumps({"alpha_init": 0.8, "rng_seed": 7, "learning_rate": 0.002, "epochs": 1, "batch_size": 4}))
    out = tmp_path / "model.pt"
    extra = ["--config", str(config), "--betas", "0.8", "0.99", "--adam-eps", "1e-6"]
    assert main(settings_args + train_argv(free_dataset_file, out, *extra)) == EXIT_OK
    stored = load_checkpoint(out).metadata["train_config"]
    assert stored["epochs"] == 1
    assert stored["alpha_init"] == 0.8
    assert stored["rng_seed"] == 7
    assert stored["learning_rate"] == 0.002
    assert stored["epsilon"] == 0.2
    assert stored["betas"] == [0.8, 0.99]
    assert stored["adam_eps"] == 1e-6
    assert get_settings(settings_args[1]).getRecentCheckpoints()[0] == str(out)

    argv = settings_args + ["--seed", "3"] + train_argv(free_dataset_file, out, "--config", str(config), "--alpha-init", "0.7")
    assert main(argv) == EXIT_OK
    stored = load_checkpoint(out).metadata["train_config"]
    assert stored["alpha_init"] == 0.7
    assert stored["rng_seed"] == 3


def test_train_named_schedule_overrides_file(tmp_path, settings_args, free_dataset_file):
    config = tmp_path / "train.json"
    config.write_text(json.dumps({"alpha_init": 0.8, "epochs": 2, "batch_size": 4}))
    out = tmp_path / "model.pt"
    assert main(settings_args + train_argv(free_dataset_file, out, "--config", str(config), "--schedule", "staged")) == EXIT_OK
    stored = load_checkpoint(out).metadata["train_config"]
    assert stored["alpha_init"] == 0.5
    assert stored["alpha_stop"] == 1.05
    assert stored["delta_per_epoch"] == 2.5e-4


@pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
def test_malformed_train_config_is_a_config_error(tmp_path, settings_args, free_dataset_file, text):
    config = tmp_path / "train.json"
    config.write_text(text)
    argv = train_argv(free_dataset_file, tmp_path / "model.pt", "--config", str(config))
    assert main(settings_args + argv) == EXIT_CONFIG_ERROR
    assert not (tmp_path / "model.pt").exists()


@pytest.mark.slow
def test_seeded_end_to_end_run_is_reproducible(tmp_path, settings_args):
    env = ["--env", "tabletop_center_obstacle"]
    runs = []
    for name in ("first", "second"):
        run = tmp_path / name
        run.mkdir()
        data, model, metrics = run / "data.csv", run / "model.pt", run / "metrics.csv"
        common = settings_args + ["--seed", "11"]
        assert main(common + ["gen-data", *env, "--n", "200", "--out", str(data)]) == EXIT_OK
        assert main(common + train_argv(data, model, "--epochs", "1")) == EXIT_OK
        bench = ["bench", "--checkpoint", str(model), *env, "--queries", "5", "--out", str(metrics)]
        assert main(common + bench) == EXIT_OK
        with open(metrics, newline="") as f:
            rows = list(csv.DictReader(f))
        for row in rows:
            row.pop("planning_time_s")
        runs.append((data.read_bytes(), load_checkpoint(model), rows))
    (data_a, ckpt_a, rows_a), (data_b, ckpt_b, rows_b) = runs
    assert data_a == data_b
    assert ckpt_a.metadata["train_config"] == ckpt_b.metadata["train_config"]
    state_a, state_b = ckpt_a.model.state_dict(), ckpt_b.model.state_dict()
    assert list(state_a) == list(state_b)
    for key in state_a:
        assert torch.equal(state_a[key], state_b[key]), key
    assert len(rows_a) == 5
    assert rows_a == rows_b
