"""
Time-field network: (start pose, goal pose, object shape) -> arrival time.

``T(p_s, p_g) = dist_w(p_s, p_g) * head(g([f(p_s) ⊗ f(p_g); k(X)]))``

* ``f``: random Fourier features followed by an MLP (pose encoder).
* ``⊗``: concatenation of elementwise max and min (symmetric in its arguments).
* ``k``: shared per-point MLP with max pooling (shape encoder).
* ``g``: residual MLP; ``head`` is a softplus, so T >= 0 and T(p, p) == 0.

All tensors are float64 on the CPU.

.. autosummary::

    ~NetConfig
    ~FourierFeatureMap
    ~TimeFieldModel
    ~pose_tensor
    ~cloud_tensor
    ~encode_pose
    ~symmetric_combine
    ~encode_shape
    ~forward_time
    ~time_and_gradients
    ~input_gradients
    ~predicted_speed
    ~save_checkpoint
    ~load_checkpoint
"""

import dataclasses
import logging
import math
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import CANONICAL_POINTS, CHECKPOINT_FORMAT_VERSION, POSE_DIM, W_ROT
from .errors import CheckpointMismatch, DegenerateGradient, InvalidInput
from .geom import Pose

logger = logging.getLogger(__name__)

DTYPE = torch.float64
GRADIENT_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True)
class NetConfig:
    """Layer sizes and initialization of :class:`TimeFieldModel`."""

    fourier_features: int = 64
    fourier_scale: float = 1.0
    pose_hidden: int = 128
    pose_latent: int = 128
    shape_hidden: int = 64
    shape_latent: int = 64
    hidden: int = 128
    residual_blocks: int = 4
    n_points: int = CANONICAL_POINTS
    w_rot: float = W_ROT
    seed: int = 0

    def __post_init__(self):
        sizes = (
            self.fourier_features,
            self.pose_hidden,
            self.pose_latent,
            self.shape_hidden,
            self.shape_latent,
            self.hidden,
            self.n_points,
        )
        if min(sizes) < 1 or self.residual_blocks < 0:
            raise InvalidInput(f"invalid network sizes {self}")
        if self.fourier_scale < 0 or self.w_rot < 0:
            raise InvalidInput("fourier_scale and w_rot must be non-negative")

    def to_dict(self):
        """Plain dict for checkpoint headers."""
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`; unknown keys are ignored."""
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


# ========================================
# Modules
# ========================================


class FourierFeatureMap(nn.Module):
    """``[cos(2π B p); sin(2π B p)]`` with a frozen Gaussian matrix B (F x 6)."""

    def __init__(self, n_features, scale, in_dim=POSE_DIM):
        super().__init__()
        self.register_buffer("B", torch.randn(n_features, in_dim, dtype=DTYPE) * scale)

    @property
    def out_dim(self):
        """Feature length, 2F."""
        return 2 * self.B.shape[0]

    def forward(self, p):
        proj = 2 * math.pi * p @ self.B.T
        return torch.cat([torch.cos(proj), torch.sin(proj)], dim=-1)


class ResidualBlock(nn.Module):
    """``x + W2 softplus(W1 x)``."""

    def __init__(self, width):
        super().__init__()
        self.lin1 = nn.Linear(width, width)
        self.lin2 = nn.Linear(width, width)

    def forward(self, x):
        return x + self.lin2(F.softplus(self.lin1(x)))


class TimeFieldModel(nn.Module):
    """
    Learned arrival time between two object poses, conditioned on shape.

    Call as ``model(clouds, p_s, p_g)`` with ``clouds`` of shape (N, 3) or
    (B, N, 3) and poses of shape (B, 6); returns T of shape (B,).
    """

    def __init__(self, config=None):
        super().__init__()
        self.config = config or NetConfig()
        c = self.config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(c.seed)
            self.fourier = FourierFeatureMap(c.fourier_features, c.fourier_scale)
            self.pose_encoder = nn.Sequential(
                nn.Linear(self.fourier.out_dim, c.pose_hidden),
                nn.Softplus(),
                nn.Linear(c.pose_hidden, c.pose_latent),
            )
            self.shape_encoder = nn.Sequential(
                nn.Linear(3, c.shape_hidden),
                nn.Softplus(),
                nn.Linear(c.shape_hidden, c.shape_latent),
            )
            self.generator_in = nn.Linear(2 * c.pose_latent + c.shape_latent, c.hidden)
            self.blocks = nn.ModuleList(ResidualBlock(c.hidden) for _ in range(c.residual_blocks))
            self.head = nn.Linear(c.hidden, 1)
            nn.init.normal_(self.head.weight, std=1e-3)
        self.double()
        self.set_constant_head(1.0, keep_weights=True)

    def set_constant_head(self, value, keep_weights=False):
        """Set the head bias so it outputs ``value``; zero its weights unless kept."""
        with torch.no_grad():
            if not keep_weights:
                self.head.weight.zero_()
            self.head.bias.fill_(math.log(math.expm1(value)))

    def pose_latent(self, p):
        """Pose encoder f."""
        return self.pose_encoder(self.fourier(p))

    def shape_latent(self, clouds):
        """Shape encoder k: shared per-point MLP, max over points."""
        return self.shape_encoder(clouds).amax(dim=-2)

    def metric_distance(self, p_s, p_g):
        """Weighted pose distance; exactly 0 with zero gradient at p_s == p_g."""
        d_trans = p_g[..., :3] - p_s[..., :3]
        d_rot = p_g[..., 3:] - p_s[..., 3:]
        d_rot = torch.atan2(torch.sin(d_rot), torch.cos(d_rot))
        sq = (d_trans**2).sum(-1) + self.config.w_rot**2 * (d_rot**2).sum(-1)
        positive = sq > 0
        root = torch.sqrt(torch.where(positive, sq, torch.ones_like(sq)))
        return torch.where(positive, root, torch.zeros_like(sq))

    def head_value(self, p_s, p_g, shape):
        """Positive factor multiplying the metric distance."""
        z = symmetric_combine(self.pose_latent(p_s), self.pose_latent(p_g))
        x = F.softplus(self.generator_in(torch.cat([z, shape], dim=-1)))
        for block in self.blocks:
            x = block(x)
        return F.softplus(self.head(F.softplus(x))).squeeze(-1)

    def time(self, p_s, p_g, shape):
        """T from poses and a precomputed shape latent (B, L)."""
        return self.metric_distance(p_s, p_g) * self.head_value(p_s, p_g, shape)

    def forward(self, clouds, p_s, p_g):
        shape = self.shape_latent(clouds)
        if shape.dim() == 1:
            shape = shape.expand(p_s.shape[0], -1)
        return self.time(p_s, p_g, shape)


# ========================================
# Input conversion
# ========================================


def pose_tensor(poses):
    """(B, 6) float64 tensor from Poses or 6-vectors; rejects non-finite values."""
    if isinstance(poses, Pose):
        poses = [poses]
    rows = [p.as_vector() if isinstance(p, Pose) else np.ravel(p) for p in poses]
    array = np.asarray(rows, dtype=float).reshape(-1, POSE_DIM)
    if not np.all(np.isfinite(array)):
        raise InvalidInput("non-finite pose")
    return torch.as_tensor(array, dtype=DTYPE)


def cloud_tensor(cloud, n_points=None):
    """(N, 3) float64 tensor of a PointCloud, optionally checking its size."""
    points = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    if n_points is not None and len(points) != n_points:
        raise InvalidInput(f"shape encoder needs {n_points} points, got {len(points)}")
    if not np.all(np.isfinite(points)):
        raise InvalidInput("non-finite point coordinates")
    return torch.as_tensor(np.asarray(points), dtype=DTYPE)


# ========================================
# Operations
# ========================================


def encode_pose(model, pose):
    """Pose latent ``f(p)`` as a numpy vector."""
    with torch.no_grad():
        return model.pose_latent(pose_tensor(pose))[0].numpy()


def symmetric_combine(a, b):
    """``concat(max(a, b), min(a, b))`` along the last axis; torch or numpy."""
    if tuple(a.shape) != tuple(b.shape):
        raise InvalidInput(f"latent shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    if isinstance(a, torch.Tensor):
        return torch.cat([torch.maximum(a, b), torch.minimum(a, b)], dim=-1)
    a, b = np.asarray(a), np.asarray(b)
    return np.concatenate([np.maximum(a, b), np.minimum(a, b)], axis=-1)


def encode_shape(model, cloud):
    """Shape latent ``k(X)`` of a canonical-size cloud as a numpy vector."""
    with torch.no_grad():
        return model.shape_latent(cloud_tensor(cloud, model.config.n_points)).numpy()


def forward_time(model, object_cloud, p_s, p_g):
    """Arrival time T(p_s, p_g) for one object as a float."""
    with torch.no_grad():
        clouds = cloud_tensor(object_cloud, model.config.n_points)
        return float(model(clouds, pose_tensor(p_s), pose_tensor(p_g))[0])


def time_and_gradients(model, clouds, p_s, p_g, create_graph=False):
    """
    Batched T and its gradients with respect to both pose inputs.

    Args:
        model: Callable ``model(clouds, p_s, p_g) -> T``.
        clouds: (N, 3) or (B, N, 3) tensor.
        p_s: (B, 6) tensor.
        p_g: (B, 6) tensor.
        create_graph: Keep the graph so the gradients are differentiable
            with respect to the model parameters.

    Returns:
        ``(T, grad_s, grad_g)`` tensors of shapes (B,), (B, 6), (B, 6).
    """
    p_s = p_s.detach().requires_grad_(True)
    p_g = p_g.detach().requires_grad_(True)
    with torch.enable_grad():
        t = model(clouds, p_s, p_g)
        if not t.requires_grad:
            return t, torch.zeros_like(p_s), torch.zeros_like(p_g)
        grad_s, grad_g = torch.autograd.grad(
            t.sum(), (p_s, p_g), create_graph=create_graph, allow_unused=True
        )
    grad_s = torch.zeros_like(p_s) if grad_s is None else grad_s
    grad_g = torch.zeros_like(p_g) if grad_g is None else grad_g
    if not create_graph:
        t, grad_s, grad_g = t.detach(), grad_s.detach(), grad_g.detach()
    return t, grad_s, grad_g


def input_gradients(model, object_cloud, p_s, p_g):
    """``(∇_{p_s} T, ∇_{p_g} T)`` as numpy 6-vectors."""
    clouds = cloud_tensor(object_cloud, model.config.n_points)
    _, grad_s, grad_g = time_and_gradients(model, clouds, pose_tensor(p_s), pose_tensor(p_g))
    return grad_s[0].numpy(), grad_g[0].numpy()


def predicted_speed(model, object_cloud, p_s, p_g):
    """``(1 / |∇_{p_s} T|, 1 / |∇_{p_g} T|)``."""
    grad_s, grad_g = input_gradients(model, object_cloud, p_s, p_g)
    norms = (float(np.linalg.norm(grad_s)), float(np.linalg.norm(grad_g)))
    if min(norms) < GRADIENT_FLOOR:
        raise DegenerateGradient(f"time-field gradient norm {min(norms):.3g} too small")
    return 1.0 / norms[0], 1.0 / norms[1]


# ========================================
# Checkpoints
# ========================================


class Checkpoint(NamedTuple):
    """A loaded model plus the metadata it was trained with."""

    model: TimeFieldModel
    speed_params: dict
    scene_hash: str
    metadata: dict


def save_checkpoint(path, model, speed_params=None, scene_hash=None, metadata=None):
    """Write a versioned checkpoint (config, Fourier matrix, parameters, provenance)."""
    state = model.state_dict()
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "net_config": model.config.to_dict(),
        "parameter_order": list(state.keys()),
        "state_dict": state,
        "speed_params": dict(speed_params or {}),
        "scene_hash": scene_hash,
        "metadata": dict(metadata or {}),
    }
    torch.save(payload, path)
    logger.info("checkpoint written: %s", path)
    return path


def load_checkpoint(path, scene_hash=None, allow_mismatch=False):
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises :class:`CheckpointMismatch` on a format-version or scene-hash
    mismatch unless ``allow_mismatch`` is set (then it only warns).
    """
    payload = torch.load(path, map_location="cpu", weights_only=True)
    problems = []
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        problems.append(
            f"format version {payload.get('format_version')!r}"
            f" != {CHECKPOINT_FORMAT_VERSION}"
        )
    stored_hash = payload.get("scene_hash")
    if scene_hash is not None and stored_hash != scene_hash:
        problems.append(f"scene hash {stored_hash!r} != {scene_hash!r}")
    if problems:
        message = f"{path}: " + "; ".join(problems)
        if not allow_mismatch:
            raise CheckpointMismatch(message)
        logger.warning("loading despite mismatch: %s", message)
    model = TimeFieldModel(NetConfig.from_dict(payload["net_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return Checkpoint(model, payload.get("speed_params", {}), stored_hash, payload.get("metadata", {}))
