"""
Support functions for the command-line tools.

.. autosummary::

    ~parse_floats
    ~parse_pose
    ~parse_orientation
    ~load_scene
    ~write_json
    ~read_json_object
"""

import json
import logging
import pathlib

from .errors import FileFormatError, InvalidInput

logger = logging.getLogger(__name__)


def parse_floats(text, count):
    """
    Parse ``count`` whitespace- or comma-separated numbers.

    Args:
        text: Source string, e.g. ``"0.1 0.2 0"``.
        count: Number of values expected.

    Returns:
        Tuple of floats.
    """
    parts = str(text).replace(",", " ").split()
    if len(parts) != count:
        raise InvalidInput(f"expected {count} numbers, got {len(parts)} in {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise InvalidInput(f"not a number in {text!r}") from None


def parse_pose(text):
    """Pose from ``"x y z roll pitch yaw"``."""
    from .geom import Pose

    return Pose.from_vector(parse_floats(text, 6))


def parse_orientation(text):
    """``(roll, pitch, yaw)`` from ``"r p y"``."""
    return parse_floats(text, 3)


def load_scene(name_or_path, grid_spacing=None):
    """
    Scene from a catalog environment name or a scene file.

    Returns:
        ``(scene, env)``; ``env`` is None for scene files.
    """
    from .environments import ENVIRONMENTS, build_scene
    from .geom import Scene

    if name_or_path in ENVIRONMENTS:
        env = ENVIRONMENTS[name_or_path]
        if grid_spacing:
            env = env.replace(grid_spacing=grid_spacing)
        return build_scene(env), env
    path = pathlib.Path(name_or_path)
    if not path.exists():
        raise FileNotFoundError(f"no environment or scene file named {name_or_path!r}")
    scene = Scene.from_file(path)
    if grid_spacing:
        scene = scene.with_distance_grid(grid_spacing)
    return scene, None


def write_json(path, data):
    """Write ``data`` as indented JSON, creating parent directories."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug("wrote %s", path)
    return path


def read_json_object(path):
    """
    Read a JSON file holding one object.

    Raises FileFormatError when the text is not JSON or not an object.
    """
    path = pathlib.Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise FileFormatError(f"{path}: expected a JSON object, got {type(data).__name__}")
    return data
