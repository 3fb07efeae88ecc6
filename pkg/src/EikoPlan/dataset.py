"""
Training tuples and the dataset CSV file.

The file starts with ``#`` comment lines; the one beginning ``# header:``
carries a JSON object with the speed parameters, scene hash, and format
version. Floats are written with ``repr`` so files are reproducible byte
for byte.

.. autosummary::

    ~DatasetTuple
    ~Dataset
"""

import csv
import dataclasses
import json
import logging
import pathlib

import numpy as np

from . import DATASET_FORMAT_VERSION
from .errors import FileFormatError, InvalidInput, SceneMismatch
from .geom import Pose

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# header:"
POSE_COLUMNS = ("x", "y", "z", "roll", "pitch", "yaw")
COLUMNS = (
    ["object_id"]
    + [f"ps_{c}" for c in POSE_COLUMNS]
    + [f"pg_{c}" for c in POSE_COLUMNS]
    + ["s_star_s", "s_star_g"]
)


@dataclasses.dataclass(frozen=True)
class DatasetTuple:
    """One training record: an object, two poses, and their ground-truth speeds."""

    object_id: str
    p_s: Pose
    p_g: Pose
    s_star_s: float
    s_star_g: float

    def row(self):
        """CSV row of this record."""
        values = list(self.p_s.as_vector()) + list(self.p_g.as_vector())
        values += [self.s_star_s, self.s_star_g]
        return [self.object_id] + [repr(float(v)) for v in values]


class Dataset:
    """
    Ordered collection of :class:`DatasetTuple` plus its provenance header.

    .. autosummary::

        ~arrays
        ~validate
        ~check_scene
        ~save
        ~load
    """

    def __init__(self, tuples, header=None):
        self.tuples = list(tuples)
        self.header = dict(header or {})
        self.header.setdefault("format_version", DATASET_FORMAT_VERSION)

    def __len__(self):
        return len(self.tuples)

    def __iter__(self):
        return iter(self.tuples)

    def __getitem__(self, index):
        return self.tuples[index]

    @property
    def scene_hash(self):
        """Hash of the scene the tuples were sampled in."""
        return self.header.get("scene_hash")

    @property
    def object_ids(self):
        """Sorted distinct object ids."""
        return sorted({t.object_id for t in self.tuples})

    def arrays(self):
        """Return ``(object_ids, p_s, p_g, s_star_s, s_star_g)``; poses as (n, 6) arrays."""
        ids = [t.object_id for t in self.tuples]
        p_s = np.array([t.p_s.as_vector() for t in self.tuples]).reshape(-1, 6)
        p_g = np.array([t.p_g.as_vector() for t in self.tuples]).reshape(-1, 6)
        s_s = np.array([t.s_star_s for t in self.tuples], dtype=float)
        s_g = np.array([t.s_star_g for t in self.tuples], dtype=float)
        return ids, p_s, p_g, s_s, s_g

    def validate(self, s_const=None, bounds=None):
        """
        Check every speed lies in (0, s_const].

        With ``bounds`` (a :class:`~EikoPlan.geom.Bounds`), also check every
        start and goal translation lies inside the workspace box.
        """
        if s_const is None:
            s_const = float(self.header.get("speed_params", {}).get("s_const", 1.0))
        for i, t in enumerate(self.tuples):
            for s in (t.s_star_s, t.s_star_g):
                if not 0 < s <= s_const * (1 + 1e-12):
                    raise InvalidInput(f"record {i}: speed {s} outside (0, {s_const}]")
            if bounds is None:
                continue
            for label, pose in (("start", t.p_s), ("goal", t.p_g)):
                if not bounds.contains(pose.translation):
                    raise InvalidInput(
                        f"record {i}: {label} translation {pose.translation}"
                        f" outside bounds {bounds.lower} .. {bounds.upper}"
                    )

    def check_scene(self, scene_hash):
        """Raise :class:`SceneMismatch` unless the header names ``scene_hash``."""
        if self.scene_hash != scene_hash:
            raise SceneMismatch(
                f"dataset was generated for scene {self.scene_hash!r},"
                f" not {scene_hash!r}"
            )

    # ========================================
    # File IO
    # ========================================

    def save(self, path):
        """Write the dataset CSV."""
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write("# EikoPlan dataset\n")
            f.write(f"{HEADER_PREFIX} {json.dumps(self.header, sort_keys=True)}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(COLUMNS)
            for t in self.tuples:
                writer.writerow(t.row())
        logger.info("wrote %d tuples to %s", len(self.tuples), path)
        return path

    @classmethod
    def load(cls, path):
        """Read a dataset CSV written by :meth:`save`."""
        path = pathlib.Path(path)
        header = {}
        body = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.startswith(HEADER_PREFIX):
                    try:
                        header = json.loads(line[len(HEADER_PREFIX) :])
                    except json.JSONDecodeError as exc:
                        raise FileFormatError(f"{path}: bad header: {exc}") from exc
                elif not line.startswith("#"):
                    body.append(line)
        if header.get("format_version") != DATASET_FORMAT_VERSION:
            raise FileFormatError(
                f"{path}: dataset format {header.get('format_version')!r},"
                f" expected {DATASET_FORMAT_VERSION}"
            )
        reader = csv.reader(body)
        columns = next(reader, None)
        if columns is None or tuple(columns) != tuple(COLUMNS):
            raise FileFormatError(f"{path}: unexpected columns {columns}")
        tuples = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise FileFormatError(f"{path}: record {lineno} has {len(row)} fields")
            try:
                values = [float(v) for v in row[1:]]
                tuples.append(
                    DatasetTuple(
                        row[0],
                        Pose.from_vector(values[0:6]),
                        Pose.from_vector(values[6:12]),
                        values[12],
                        values[13],
                    )
                )
            except (ValueError, InvalidInput) as exc:
                raise FileFormatError(f"{path}: record {lineno}: {exc}") from exc
        dataset = cls(tuples, header)
        dataset.validate()
        return dataset
