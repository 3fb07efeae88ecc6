"""
Procedural benchmark environments and the desk-scale object catalog.

Obstacles are axis-aligned boxes whose surfaces are sampled on a regular
pitch, so every scene is reproducible from its :class:`EnvSpec`. The
cabinet's clutter boxes are placed from ``EnvSpec.seed``; its layout is a
procedural stand-in, not a measured household scene.

.. autosummary::

    ~EnvSpec
    ~ENVIRONMENTS
    ~OBJECT_BUILDERS
    ~get_env
    ~box_surface
    ~cylinder_surface
    ~object_cloud
    ~build_scene
"""

import dataclasses
import logging
import math

import numpy as np

from . import CANONICAL_POINTS
from .errors import InvalidInput
from .geom import Bounds, PointCloud, Scene, farthest_point_sample
from .speed import reachability_from_dict

logger = logging.getLogger(__name__)

SURFACE_PITCH = 0.005  # m
OBJECT_PITCH = 0.004  # m


@dataclasses.dataclass(frozen=True)
class EnvSpec:
    """
    Definition of one benchmark environment.

    ``boxes`` holds ``(center, size)`` pairs of obstacle boxes; ``clutter``
    extra boxes are placed from ``seed`` on the ``clutter_surfaces`` heights.
    ``sampling`` is the pose-sampling mode (``"6d"``, ``"3d"``, ``"2d"``).
    """

    name: str
    bounds: Bounds
    boxes: tuple = ()
    objects: tuple = ("box", "cylinder")
    sampling: str = "6d"
    reach: dict = dataclasses.field(default_factory=lambda: {"kind": "always_reachable"})
    clutter: int = 0
    clutter_surfaces: tuple = ()
    surface_pitch: float = SURFACE_PITCH
    contact_tolerance: float = SURFACE_PITCH
    grid_spacing: float = None
    seed: int = 0

    def __post_init__(self):
        if self.surface_pitch <= 0:
            raise InvalidInput("surface pitch must be positive")
        boxes = tuple((tuple(map(float, c)), tuple(map(float, s))) for c, s in self.boxes)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "objects", tuple(self.objects))

    def reachability(self):
        """Reachability gate of this environment."""
        return reachability_from_dict(self.reach)

    def replace(self, **changes):
        """Copy with some fields changed."""
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        """Plain dict for dataset headers."""
        return {
            "name": self.name,
            "bounds": list(self.bounds.lower + self.bounds.upper),
            "boxes": [[list(c), list(s)] for c, s in self.boxes],
            "objects": list(self.objects),
            "sampling": self.sampling,
            "reach": dict(self.reach),
            "clutter": self.clutter,
            "clutter_surfaces": list(self.clutter_surfaces),
            "surface_pitch": self.surface_pitch,
            "contact_tolerance": self.contact_tolerance,
            "grid_spacing": self.grid_spacing,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        data = dict(data)
        bounds = data.pop("bounds")
        data["bounds"] = Bounds(tuple(bounds[:3]), tuple(bounds[3:]))
        data["boxes"] = tuple((tuple(c), tuple(s)) for c, s in data.get("boxes", ()))
        data["objects"] = tuple(data.get("objects", ()))
        data["clutter_surfaces"] = tuple(data.get("clutter_surfaces", ()))
        return cls(**data)


def _shell(center):
    return {"kind": "spherical_shell", "center": list(center), "r_inner": 0.15, "r_outer": 0.9}


ENVIRONMENTS = {
    spec.name: spec
    for spec in (
        EnvSpec(
            "tabletop_center_obstacle",
            Bounds((-0.25, -0.25, -0.25), (0.25, 0.25, 0.25)),
            boxes=(((0.0, 0.0, 0.0), (0.12, 0.12, 0.5)),),
            reach=_shell((-0.55, 0.0, 0.0)),
        ),
        EnvSpec(
            "u_tunnel",
            Bounds((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)),
            boxes=(((0.0, -0.15, 0.0), (0.05, 0.7, 1.0)),),
        ),
        EnvSpec(
            "cabinet",
            Bounds((0.0, -0.5, 0.0), (0.55, 0.5, 0.6)),
            boxes=(
                ((0.575, 0.0, 0.3), (0.05, 1.0, 0.6)),  # back
                ((0.275, -0.525, 0.3), (0.55, 0.05, 0.6)),  # sides
                ((0.275, 0.525, 0.3), (0.55, 0.05, 0.6)),
                ((0.35, 0.0, 0.3), (0.4, 1.0, 0.02)),  # shelf
            ),
            clutter=3,
            clutter_surfaces=(0.0, 0.31),
            reach=_shell((-0.3, 0.0, 0.3)),
        ),
        EnvSpec(
            "free_space",
            Bounds((-0.5, -0.5, 0.0), (0.5, 0.5, 0.0)),
            objects=("box",),
            sampling="2d",
        ),
    )
}


def get_env(name):
    """Catalog environment by name."""
    try:
        return ENVIRONMENTS[name]
    except KeyError:
        raise InvalidInput(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None


# ========================================
# Surface sampling
# ========================================


def _axis_samples(lo, hi, pitch):
    n = max(2, int(math.ceil((hi - lo) / pitch - 1e-9)) + 1)
    return np.linspace(lo, hi, n)


def box_surface(center, size, pitch=SURFACE_PITCH):
    """Regularly spaced points on the six faces of an axis-aligned box."""
    center = np.asarray(center, dtype=float)
    half = np.asarray(size, dtype=float) / 2
    lo, hi = center - half, center + half
    samples = [_axis_samples(lo[i], hi[i], pitch) for i in range(3)]
    faces = []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        uu, vv = np.meshgrid(samples[u], samples[v], indexing="ij")
        for level in (lo[axis], hi[axis]):
            face = np.empty((uu.size, 3))
            face[:, axis] = level
            face[:, u] = uu.ravel()
            face[:, v] = vv.ravel()
            faces.append(face)
    return np.unique(np.concatenate(faces), axis=0)


def cylinder_surface(center, radius, height, pitch=OBJECT_PITCH):
    """Points on a z-aligned closed cylinder."""
    n_around = max(8, int(math.ceil(2 * math.pi * radius / pitch)))
    angles = np.arange(n_around) * 2 * math.pi / n_around
    zs = _axis_samples(-height / 2, height / 2, pitch)
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    side = np.array([[x, y, z] for z in zs for x, y in ring])
    caps = []
    for r in _axis_samples(0.0, radius, pitch)[:-1]:
        m = max(1, int(math.ceil(2 * math.pi * r / pitch)))
        a = np.arange(m) * 2 * math.pi / m
        for z in (-height / 2, height / 2):
            caps.append(np.stack([r * np.cos(a), r * np.sin(a), np.full(m, z)], axis=1))
    return np.concatenate([side] + caps) + np.asarray(center, dtype=float)


def _mug():
    body = cylinder_surface((0.0, 0.0, 0.0), 0.04, 0.09)
    angles = np.linspace(-math.pi / 2, math.pi / 2, 24)
    handle = np.array(
        [[0.04 + 0.025 * math.cos(a), 0.0, 0.025 * math.sin(a)] for a in angles]
    )
    return np.concatenate([body, handle])


def _l_shape():
    return np.concatenate(
        [
            box_surface((0.0, 0.0, 0.0), (0.08, 0.03, 0.03), OBJECT_PITCH),
            box_surface((-0.025, 0.04, 0.0), (0.03, 0.05, 0.03), OBJECT_PITCH),
        ]
    )


OBJECT_BUILDERS = {
    "box": lambda: box_surface((0.0, 0.0, 0.0), (0.06, 0.04, 0.03), OBJECT_PITCH),
    "cylinder": lambda: cylinder_surface((0.0, 0.0, 0.0), 0.025, 0.06),
    "l_shape": _l_shape,
    "mug": _mug,
}


def object_cloud(name, n_points=CANONICAL_POINTS):
    """Canonical cloud of a catalog object, downsampled by farthest point sampling."""
    try:
        dense = OBJECT_BUILDERS[name]()
    except KeyError:
        raise InvalidInput(f"unknown object {name!r}; choose from {sorted(OBJECT_BUILDERS)}") from None
    return farthest_point_sample(PointCloud(dense), n_points)


def _clutter_boxes(spec):
    rng = np.random.default_rng(spec.seed)
    lower, upper = np.asarray(spec.bounds.lower), np.asarray(spec.bounds.upper)
    boxes = []
    for _ in range(spec.clutter):
        size = rng.uniform(0.04, 0.1, size=3)
        base = spec.clutter_surfaces[int(rng.integers(len(spec.clutter_surfaces)))]
        xy = rng.uniform(lower[:2] + size[:2], upper[:2] - size[:2])
        boxes.append(((xy[0], xy[1], base + size[2] / 2), tuple(size)))
    return boxes


def build_scene(spec, n_points=CANONICAL_POINTS):
    """Deterministically build the Scene of an environment."""
    boxes = list(spec.boxes) + _clutter_boxes(spec)
    if boxes:
        points = np.concatenate([box_surface(c, s, spec.surface_pitch) for c, s in boxes])
    else:
        points = np.zeros((0, 3))
    scene = Scene(
        bounds=spec.bounds,
        objects={name: object_cloud(name, n_points) for name in spec.objects},
        obstacle_cloud=PointCloud(points),
        contact_tolerance=spec.contact_tolerance,
        name=spec.name,
    )
    if spec.grid_spacing:
        scene = scene.with_distance_grid(spec.grid_spacing)
    logger.info(
        "scene %r: %d obstacle points, objects %s",
        spec.name,
        scene.obstacle_cloud.count,
        list(scene.objects),
    )
    return scene
