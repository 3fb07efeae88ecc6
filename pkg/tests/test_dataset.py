"""Tests for dataset records and the dataset CSV file."""

import pytest

from EikoPlan.dataset import COLUMNS, Dataset, DatasetTuple
from EikoPlan.errors import FileFormatError, InvalidInput, SceneMismatch
from EikoPlan.geom import Bounds, Pose


def sample_dataset():
    tuples = [
        DatasetTuple("box", Pose((0.1, 0.2, 0.3), (0.0, 0.1, -0.2)), Pose((0.3, 0.1, 0.0)), 0.5, 1.0),
        DatasetTuple("cylinder", Pose.planar(0.2, -0.1, 1.0), Pose.planar(-0.3, 0.2), 1.0 / 6, 0.75),
    ]
    return Dataset(tuples, {"scene_hash": "abc", "seed": 3, "speed_params": {"s_const": 1.0}})


def test_save_and_load(tmp_path):
    dataset = sample_dataset()
    path = dataset.save(tmp_path / "data.csv")
    loaded = Dataset.load(path)
    assert loaded.tuples == dataset.tuples
    assert loaded.header == dataset.header
    assert loaded.object_ids == ["box", "cylinder"]
    # repr floats make a second save byte-identical
    loaded.save(tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_file_layout(tmp_path):
    path = sample_dataset().save(tmp_path / "data.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "# EikoPlan dataset"
    assert lines[1].startswith("# header: {")
    assert lines[2] == ",".join(COLUMNS)
    assert len(lines) == 5


def test_arrays():
    ids, p_s, p_g, s_s, s_g = sample_dataset().arrays()
    assert ids == ["box", "cylinder"]
    assert p_s.shape == p_g.shape == (2, 6)
    assert p_s[1].tolist() == [0.2, -0.1, 0.0, 0.0, 0.0, 1.0]
    assert s_s.tolist() == [0.5, 1.0 / 6]


def test_bad_files(tmp_path):
    path = sample_dataset().save(tmp_path / "data.csv")
    text = path.read_text()
    bad_version = tmp_path / "version.csv"
    bad_version.write_text(text.replace('"format_version": 1', '"format_version": 99'))
    with pytest.raises(FileFormatError):
        Dataset.load(bad_version)
    bad_columns = tmp_path / "columns.csv"
    bad_columns.write_text(text.replace("s_star_g", "speed_g"))
    with pytest.raises(FileFormatError):
        Dataset.load(bad_columns)
    short = tmp_path / "short.csv"
    short.write_text(text + "box,1,2\n")
    with pytest.raises(FileFormatError):
        Dataset.load(short)


def test_validate_speeds():
    dataset = sample_dataset()
    dataset.validate()
    dataset.tuples.append(DatasetTuple("box", Pose(), Pose((0.1, 0.0, 0.0)), 1.5, 1.0))
    with pytest.raises(InvalidInput):
        dataset.validate()
    with pytest.raises(InvalidInput):
        Dataset([DatasetTuple("box", Pose(), Pose(), 0.0, 1.0)]).validate(1.0)


def test_validate_bounds():
    dataset = sample_dataset()
    inside = Bounds((-0.5, -0.5, 0.0), (0.5, 0.5, 0.5))
    dataset.validate(bounds=inside)
    with pytest.raises(InvalidInput, match="record 0: start"):
        dataset.validate(bounds=Bounds((0.2, -0.5, 0.0), (0.5, 0.5, 0.5)))
    dataset.tuples.append(DatasetTuple("box", Pose(), Pose((0.0, 0.0, -0.1)), 1.0, 1.0))
    with pytest.raises(InvalidInput, match="record 2: goal"):
        dataset.validate(bounds=inside)


def test_check_scene():
    dataset = sample_dataset()
    dataset.check_scene("abc")
    with pytest.raises(SceneMismatch):
        dataset.check_scene("xyz")
