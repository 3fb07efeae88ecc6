"""
Fit a TimeFieldModel to ground-truth speeds under the isotropic Eikonal loss.

The objective per batch is the mean isotropic loss between the scheduled
target speeds and the speeds implied by the field gradients, plus
``epsilon`` times a regularizer:

* ``dirichlet``: mean ``|∇_{p_g} T|²`` (first derivatives only).
* ``viscosity``: mean squared Laplacian ``(Δ_{p_g} T)²`` (second derivatives).
* ``none``: isotropic loss alone.

.. autosummary::

    ~TrainConfig
    ~alpha_schedule_preset
    ~Batch
    ~make_batch
    ~isotropic_loss
    ~dirichlet_term
    ~laplacian
    ~viscosity_term
    ~evaluate_loss
    ~EpochRecord
    ~train
    ~write_training_log
"""

import csv
import dataclasses
import logging
import math
import pathlib
import time
from typing import NamedTuple

import numpy as np
import torch

from . import BATCH_SIZE, EPOCHS, EPSILON, LEARNING_RATE, POSE_DIM, S_CONST
from .errors import InvalidInput, NanLoss
from .net import DTYPE, GRADIENT_FLOOR, cloud_tensor, time_and_gradients
from .speed import ALPHA_MAX, scheduled_speed

logger = logging.getLogger(__name__)

REGULARIZERS = ("dirichlet", "viscosity", "none")
LOG_COLUMNS = ("epoch", "alpha", "mean_loss", "reg_term", "wall_seconds", "reg_seconds")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    Training hyperparameters.

    ``warmup_epochs`` defaults to 10% of ``epochs`` and ``delta_per_epoch``
    to a linear ramp reaching ``alpha_stop`` over the next 80%.
    """

    epochs: int = EPOCHS
    batch_size: int = BATCH_SIZE
    learning_rate: float = LEARNING_RATE
    epsilon: float = EPSILON
    regularizer: str = "dirichlet"
    alpha_init: float = 0.5
    warmup_epochs: int = None
    delta_per_epoch: float = None
    alpha_stop: float = 1.0
    delta_halving_epoch: int = None
    rng_seed: int = 0
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    dirichlet_both_endpoints: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidInput("epochs must be >= 0 and batch_size >= 1")
        if self.regularizer not in REGULARIZERS:
            raise InvalidInput(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise InvalidInput(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not 0 <= self.alpha_init <= self.alpha_stop <= ALPHA_MAX:
            raise InvalidInput(
                f"need 0 <= alpha_init <= alpha_stop <= {ALPHA_MAX},"
                f" got {self.alpha_init}, {self.alpha_stop}"
            )
        if self.warmup_epochs is None:
            object.__setattr__(self, "warmup_epochs", int(round(0.1 * self.epochs)))
        if self.delta_per_epoch is None:
            ramp = max(1, int(round(0.8 * self.epochs)))
            object.__setattr__(self, "delta_per_epoch", (self.alpha_stop - self.alpha_init) / ramp)
        if self.delta_per_epoch < 0:
            raise InvalidInput("delta_per_epoch must be non-negative")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    def alpha_at(self, epoch):
        """Scheduling coefficient used during ``epoch`` (0-based)."""
        if epoch < self.warmup_epochs:
            return self.alpha_init
        ramp = epoch - self.warmup_epochs + 1
        if self.delta_halving_epoch is None:
            gain = ramp * self.delta_per_epoch
        else:
            full = max(0, min(ramp, self.delta_halving_epoch - self.warmup_epochs))
            gain = full * self.delta_per_epoch + (ramp - full) * self.delta_per_epoch / 2
        return min(self.alpha_init + gain, self.alpha_stop)

    def to_dict(self):
        """Plain dict for checkpoint metadata."""
        data = dataclasses.asdict(self)
        data["betas"] = list(self.betas)
        return data

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`; unknown keys are ignored."""
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def alpha_schedule_preset(name, epochs=EPOCHS):
    """
    Keyword arguments of a named alpha schedule for :class:`TrainConfig`.

    ``"default"``: hold 0.5 for 10%, ramp to 1.0 over 80%.
    ``"staged"``: hold 0.5 for 10%, add 2.5e-4 per epoch, halve the
    increment at mid-training, stop at 1.05.
    """
    if name == "default":
        return {"epochs": epochs, "alpha_init": 0.5, "alpha_stop": 1.0}
    if name == "staged":
        return {
            "epochs": epochs,
            "alpha_init": 0.5,
            "warmup_epochs": epochs // 10,
            "delta_per_epoch": 2.5e-4,
            "delta_halving_epoch": epochs // 2,
            "alpha_stop": ALPHA_MAX,
        }
    raise InvalidInput(f"unknown alpha schedule preset {name!r}")


# ========================================
# Batches and loss terms
# ========================================


class Batch(NamedTuple):
    """Tensors of one minibatch; ``clouds`` is (B, N, 3) or a shared (N, 3)."""

    clouds: torch.Tensor
    p_s: torch.Tensor
    p_g: torch.Tensor
    s_star_s: torch.Tensor
    s_star_g: torch.Tensor


def make_batch(clouds, p_s, p_g, s_star_s, s_star_g, alpha=1.0, s_const=S_CONST):
    """
    Build a :class:`Batch` from numpy arrays, blending targets by ``alpha``.

    Args:
        clouds: (B, N, 3) or (N, 3) array or tensor.
        p_s: (B, 6) start poses.
        p_g: (B, 6) goal poses.
        s_star_s: (B,) ground-truth speeds at the starts.
        s_star_g: (B,) ground-truth speeds at the goals.
        alpha: Scheduling coefficient.
        s_const: Speed scale.
    """

    def as_tensor(a):
        return torch.as_tensor(np.asarray(a, dtype=float), dtype=DTYPE)

    return Batch(
        clouds if isinstance(clouds, torch.Tensor) else as_tensor(clouds),
        as_tensor(p_s).reshape(-1, POSE_DIM),
        as_tensor(p_g).reshape(-1, POSE_DIM),
        as_tensor(scheduled_speed(s_star_s, alpha, s_const)).reshape(-1),
        as_tensor(scheduled_speed(s_star_g, alpha, s_const)).reshape(-1),
    )


def isotropic_loss(s_star_s, s_star_g, s_pred_s, s_pred_g):
    """
    ``S*_s/S_s + S_s/S*_s + S*_g/S_g + S_g/S*_g - 4``, elementwise.

    Accepts floats, numpy arrays, or tensors. Speeds must be positive; NaN
    propagates to the result.
    """
    for s in (s_star_s, s_star_g, s_pred_s, s_pred_g):
        bad = torch.any(s <= 0) if isinstance(s, torch.Tensor) else np.any(np.asarray(s) <= 0)
        if bad:
            raise InvalidInput("isotropic loss needs positive speeds")
    return (
        s_star_s / s_pred_s
        + s_pred_s / s_star_s
        + s_star_g / s_pred_g
        + s_pred_g / s_star_g
        - 4.0
    )


def _speed(gradient):
    sq = (gradient**2).sum(-1)
    return 1.0 / torch.sqrt(torch.clamp(sq, min=GRADIENT_FLOOR**2))


def dirichlet_term(model, batch, both_endpoints=False):
    """Mean ``|∇_{p_g} T|²`` over the batch (plus ``|∇_{p_s} T|²`` if both)."""
    _, grad_s, grad_g = time_and_gradients(model, batch.clouds, batch.p_s, batch.p_g, create_graph=True)
    return _dirichlet_from_gradients(grad_s, grad_g, both_endpoints)


def _dirichlet_from_gradients(grad_s, grad_g, both_endpoints):
    energy = (grad_g**2).sum(-1)
    if both_endpoints:
        energy = energy + (grad_s**2).sum(-1)
    return energy.mean()


def laplacian(model, batch, create_graph=True):
    """Per-sample ``Δ_{p_g} T``: trace of the goal-pose Hessian (6 second derivatives)."""
    p_g = batch.p_g.detach().requires_grad_(True)
    result = torch.zeros(p_g.shape[0], dtype=p_g.dtype)
    with torch.enable_grad():
        t = model(batch.clouds, batch.p_s, p_g)
        if not t.requires_grad:
            return result
        (grad_g,) = torch.autograd.grad(t.sum(), p_g, create_graph=True, allow_unused=True)
        if grad_g is None or not grad_g.requires_grad:
            return result
        for k in range(POSE_DIM):
            (second,) = torch.autograd.grad(
                grad_g[:, k].sum(),
                p_g,
                create_graph=create_graph,
                retain_graph=True,
                allow_unused=True,
            )
            if second is not None:
                result = result + second[:, k]
    return result


def viscosity_term(model, batch):
    """Mean Laplacian ``Δ_{p_g} T`` over the batch."""
    return laplacian(model, batch).mean()


class LossTerms(NamedTuple):
    """Pieces of the training objective for one batch."""

    data: torch.Tensor
    regularizer: torch.Tensor
    total: torch.Tensor
    reg_seconds: float


def evaluate_loss(model, batch, config):
    """Isotropic data loss, regularizer, and their weighted sum for a batch."""
    _, grad_s, grad_g = time_and_gradients(model, batch.clouds, batch.p_s, batch.p_g, create_graph=True)
    data = isotropic_loss(batch.s_star_s, batch.s_star_g, _speed(grad_s), _speed(grad_g)).mean()
    start = time.perf_counter()
    if config.regularizer == "dirichlet":
        reg = _dirichlet_from_gradients(grad_s, grad_g, config.dirichlet_both_endpoints)
    elif config.regularizer == "viscosity":
        reg = (laplacian(model, batch) ** 2).mean()
    else:
        reg = torch.zeros((), dtype=DTYPE)
    reg_seconds = time.perf_counter() - start
    return LossTerms(data, reg, data + config.epsilon * reg, reg_seconds)


# ========================================
# Training loop
# ========================================


@dataclasses.dataclass(frozen=True)
class EpochRecord:
    """One row of the training log."""

    epoch: int
    alpha: float
    mean_loss: float
    reg_term: float
    wall_seconds: float
    reg_seconds: float


def _object_clouds(scene, object_ids, n_points):
    return {oid: cloud_tensor(scene.object_cloud(oid), n_points) for oid in object_ids}


def train(model, dataset, scene, config=None, log_path=None):
    """
    Optimize ``model`` in place with Adam.

    Args:
        model: TimeFieldModel (or any module with the same call signature).
        dataset: :class:`~EikoPlan.dataset.Dataset` sampled in ``scene``.
        scene: Scene providing the canonical object clouds.
        config: TrainConfig, defaults when None.
        log_path: Optional CSV path for the per-epoch log.

    Returns:
        ``(model, records)`` with one :class:`EpochRecord` per epoch.
    """
    config = config or TrainConfig()
    if dataset.scene_hash is None:
        logger.warning("dataset carries no scene hash; cannot confirm it matches the scene")
    else:
        dataset.check_scene(scene.scene_hash)
    if len(dataset) == 0:
        raise InvalidInput("cannot train on an empty dataset")
    s_const = float(dataset.header.get("speed_params", {}).get("s_const", S_CONST))
    dataset.validate(s_const, bounds=scene.bounds)
    ids, p_s, p_g, s_s, s_g = dataset.arrays()
    n_points = getattr(getattr(model, "config", None), "n_points", None)
    clouds = _object_clouds(scene, dataset.object_ids, n_points)
    id_array = np.array(ids)

    rng = np.random.default_rng(config.rng_seed)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate, betas=config.betas, eps=config.adam_eps
    )
    model.train()
    records = []
    n = len(dataset)
    for epoch in range(config.epochs):
        alpha = config.alpha_at(epoch)
        order = rng.permutation(n)
        started = time.perf_counter()
        loss_sum = reg_sum = reg_seconds = 0.0
        n_batches = 0
        for batch_index, first in enumerate(range(0, n, config.batch_size)):
            idx = order[first : first + config.batch_size]
            batch_clouds = torch.stack([clouds[oid] for oid in id_array[idx]])
            batch = make_batch(batch_clouds, p_s[idx], p_g[idx], s_s[idx], s_g[idx], alpha, s_const)
            optimizer.zero_grad()
            terms = evaluate_loss(model, batch, config)
            if not torch.isfinite(terms.total):
                raise NanLoss(epoch, batch_index, float(terms.total))
            terms.total.backward()
            optimizer.step()
            if not all(torch.isfinite(p).all() for p in model.parameters()):
                raise NanLoss(epoch, batch_index)
            loss_sum += float(terms.data)
            reg_sum += float(terms.regularizer)
            reg_seconds += terms.reg_seconds
            n_batches += 1
        record = EpochRecord(
            epoch,
            alpha,
            loss_sum / n_batches,
            reg_sum / n_batches,
            time.perf_counter() - started,
            reg_seconds,
        )
        records.append(record)
        logger.info(
            "epoch %d alpha=%.4f loss=%.6g reg=%.6g (%.2fs, regularizer %.2fs)",
            record.epoch,
            record.alpha,
            record.mean_loss,
            record.reg_term,
            record.wall_seconds,
            record.reg_seconds,
        )
    model.eval()
    if log_path is not None:
        write_training_log(log_path, records)
    return model, records


def write_training_log(path, records):
    """Write epoch records as CSV."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in records:
            writer.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in LOG_COLUMNS[1:]])
    return path
