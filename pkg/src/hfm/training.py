"""Flow training on geodesic paths, and a straight-line Euclidean baseline.

Each step draws support rows uniformly with a fresh ``t ~ U[0, 1]`` per row,
builds the ground-truth pair ``(x_t, x_{t+delta})`` on the geodesic from the
image point to its prototype, and regresses the one-step prediction onto
``x_{t+delta}`` (squared geodesic distance) plus ``lam`` times a contrastive
term that keeps the predicted state nearest its own prototype.
"""
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import lorentz
from . import lorentz_ad as lad
from .alignment import hyperbolic_contrastive_loss, softmax_xent
from .errors import InvalidArgumentError, TrainingFailure
from .inference import euler_step, n_steps
from .optim import AdamW, cosine_lr
from .velocity import VelocityNetParams, backward, forward

logger = logging.getLogger(__name__)


@dataclass
class FlowTrainConfig:
    delta: float = 0.1
    lam: float = 0.1
    tau: float = 0.1
    steps: int = 2000
    batch_size: int = 64
    lr: float = 2e-4
    horizon: int = None
    weight_decay: float = 1e-4
    width: int = 256
    n_layers: int = 3
    log_every: int = 1
    steps_per_epoch: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InvalidArgumentError("delta must lie in (0, 1)")
        if self.lam < 0 or not self.tau > 0:
            raise InvalidArgumentError("need lam >= 0 and tau > 0")
        if self.steps < 1 or self.batch_size < 1 or self.steps_per_epoch < 1:
            raise InvalidArgumentError("steps, batch_size and steps_per_epoch must be positive")

    @property
    def schedule_horizon(self):
        return self.steps if self.horizon is None else self.horizon


@dataclass
class LossTrace:
    step: list = field(default_factory=list)
    L_step: list = field(default_factory=list)
    L_icd: list = field(default_factory=list)
    total: list = field(default_factory=list)
    lr: list = field(default_factory=list)

    COLUMNS = ("step", "L_step", "L_icd", "total", "lr")

    def append(self, step, ls, li, total, lr):
        self.step.append(step)
        self.L_step.append(ls)
        self.L_icd.append(li)
        self.total.append(total)
        self.lr.append(lr)

    def __len__(self):
        return len(self.step)

    def epoch_means(self, steps_per_epoch):
        ls = np.asarray(self.L_step)
        return np.array([ls[i:i + steps_per_epoch].mean() for i in range(0, ls.size, steps_per_epoch)])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(self.step, self.L_step, self.L_icd, self.total, self.lr):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


@dataclass
class FlowRun:
    params: VelocityNetParams
    trace: LossTrace
    config: FlowTrainConfig


# ----------------------------------------------------------------- pieces


def sample_pair_states(x0, x1, t, delta, kappa):
    """Ground-truth states at ``t`` and ``min(t + delta, 1)`` on the geodesic ``x0 -> x1``."""
    t = np.asarray(t, dtype=np.float64)
    t_next = np.minimum(t + delta, 1.0)
    return lorentz.geodesic_interpolate(x0, x1, t, kappa), lorentz.geodesic_interpolate(x0, x1, t_next, kappa)


def predicted_next_state(field, x_t, t, delta, kappa):
    return euler_step(field, x_t, t, delta, kappa)


def step_loss(x_pred, x_gt, kappa):
    """Squared geodesic distance."""
    return lorentz.geodesic_distance(x_pred, x_gt, kappa) ** 2


def icd_loss(x_pred, prototypes, label, tau, kappa=None):
    return hyperbolic_contrastive_loss(x_pred, prototypes, label, tau, kappa)


def composite_loss(params, x_t, t, x_next, labels, prototypes, delta, kappa, lam, tau, need_grad=True):
    """Batch objective ``mean L_step + lam * mean L_icd`` and its parameter gradients.

    Returns ``(total, L_step, L_icd, grads)``; ``grads`` is ``None`` when not requested.
    """
    F, cache = forward(params, x_t, t, return_cache=True)
    Ft = ad.Tensor(F, requires_grad=True)
    v = lad.tangent_project(x_t, Ft, kappa)
    x_hat = lad.exp_map(x_t, delta * v, kappa)
    ls = lad.sq_distance(x_hat, x_next, kappa).mean()
    li = lad.contrastive_loss(lad.distance_matrix(x_hat, prototypes, kappa), labels, tau).mean()
    total = ls + lam * li
    grads = None
    if need_grad:
        total.backward()
        grads = backward(params, x_t, t, Ft.grad, cache)
    return total.item(), ls.item(), li.item(), grads


def _check_inputs(points, labels, n_protos):
    labels = np.asarray(labels, dtype=np.int64)
    if points.shape[0] == 0 or labels.shape != (points.shape[0],):
        raise InvalidArgumentError("need one label per source point")
    if n_protos < 2:
        raise InvalidArgumentError("flow training needs at least two classes")
    if np.any(labels < 0) or np.any(labels >= n_protos):
        raise InvalidArgumentError("labels must index the prototypes")
    return labels


def _run(config, io_dim, batch_fn, loss_fn, time_head):
    params = VelocityNetParams.init(io_dim, config.width, config.n_layers, seed=config.seed, time_head=time_head)
    rng = np.random.default_rng(config.seed + 1)
    opt = AdamW(params.tensors, lr=config.lr, weight_decay=config.weight_decay)
    trace = LossTrace()
    horizon = config.schedule_horizon
    for step in range(config.steps):
        batch = batch_fn(rng)
        total, ls, li, grads = loss_fn(params, *batch)
        if not (math.isfinite(total) and all(np.all(np.isfinite(g)) for g in grads.values())):
            raise TrainingFailure("non-finite training loss", step)
        lr = cosine_lr(step, config.lr, horizon)
        if step % config.log_every == 0:
            trace.append(step, ls, li, ls + config.lam * li, lr)
        opt.step(grads, lr=lr)
    logger.info("flow training done: L_step %.4g -> %.4g", trace.L_step[0], trace.L_step[-1])
    return FlowRun(params, trace, config)


def train_flow(embedding, config=None):
    """Fit the velocity field on an :class:`~hfm.alignment.AlignedEmbedding`."""
    config = config or FlowTrainConfig()
    x0 = np.asarray(embedding.image_points, dtype=np.float64)
    protos = embedding.prototype_set
    kappa = protos.kappa
    labels = _check_inputs(x0, embedding.labels, len(protos))
    x1 = protos.points[labels]
    pts = protos.points
    delta, lam, tau = config.delta, config.lam, config.tau

    def batch_fn(rng):
        idx = rng.integers(0, x0.shape[0], size=config.batch_size)
        t = rng.random(config.batch_size)
        x_t, x_next = sample_pair_states(x0[idx], x1[idx], t, delta, kappa)
        return x_t, t, x_next, labels[idx]

    def loss_fn(params, x_t, t, x_next, lab):
        return composite_loss(params, x_t, t, x_next, lab, pts, delta, kappa, lam, tau)

    return _run(config, x0.shape[1], batch_fn, loss_fn, time_head=True)


# ----------------------------------------------------------------- baseline


def straight_line(x0, x1, t):
    """``(1 - t) x0 + t x1`` with ``t`` broadcast over rows."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    return (1.0 - t) * x0 + t * x1


def euclidean_step(field, x, t, delta):
    return x + delta * np.asarray(field(x, t), dtype=np.float64)


def euclidean_composite_loss(params, x_t, t, x_next, labels, prototypes, delta, lam, tau, need_grad=True):
    """Straight-line analogue of :func:`composite_loss` with Euclidean distances."""
    F, cache = forward(params, x_t, t, return_cache=True)
    Ft = ad.Tensor(F, requires_grad=True)
    x_hat = x_t + delta * Ft
    diff = x_hat - x_next
    ls = (diff * diff).sum(axis=-1).mean()
    rel = x_hat[:, None, :] - prototypes[None, :, :]
    dist = ad.sqrt(ad.clip_min((rel * rel).sum(axis=-1), 1e-300))
    li = lad.contrastive_loss(dist, labels, tau).mean()
    total = ls + lam * li
    grads = None
    if need_grad:
        total.backward()
        grads = backward(params, x_t, t, Ft.grad, cache)
    return total.item(), ls.item(), li.item(), grads


def euclidean_icd(x, prototypes, labels, tau):
    dist = np.linalg.norm(np.atleast_2d(x)[:, None, :] - prototypes[None, :, :], axis=-1)
    return softmax_xent(dist, labels, tau)


def train_euclidean_baseline(features, labels, prototypes, config=None):
    """Same network, optimizer and seed handling on straight paths ``(1-t) x0 + t x1``.

    ``features`` and ``prototypes`` are flat coordinates (the aligned tangent
    coordinates in the experiment, so only the geometry differs).
    """
    config = config or FlowTrainConfig()
    x0 = np.asarray(features, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    labels = _check_inputs(x0, labels, prototypes.shape[0])
    x1 = prototypes[labels]
    delta, lam, tau = config.delta, config.lam, config.tau

    def batch_fn(rng):
        idx = rng.integers(0, x0.shape[0], size=config.batch_size)
        t = rng.random(config.batch_size)
        a, b = x0[idx], x1[idx]
        return straight_line(a, b, t), t, straight_line(a, b, np.minimum(t + delta, 1.0)), labels[idx]

    def loss_fn(params, x_t, t, x_next, lab):
        return euclidean_composite_loss(params, x_t, t, x_next, lab, prototypes, delta, lam, tau)

    return _run(config, x0.shape[1], batch_fn, loss_fn, time_head=False)


def euclidean_transport(field, x0, delta):
    """Fixed-horizon Euler transport in flat space; returns ``(M, steps+1, n)`` states."""
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    states = [x]
    for k in range(n_steps(delta)):
        x = euclidean_step(field, x, k * delta, delta)
        states.append(x)
    return np.stack(states, axis=1)
