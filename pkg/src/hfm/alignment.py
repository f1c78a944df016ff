"""Centripetal hyperbolic alignment.

Text prototypes are lifted with a smaller tangent scale than image features,
so they sit nearer the origin. A shared linear head, the two scales and the
curvature are then tuned with a hyperbolic contrastive loss plus a weighted
entailment-cone loss that asks each image to lie inside its prototype's cone.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import lorentz
from . import lorentz_ad as lad
from .errors import DegenerateInputError, InvalidArgumentError, TrainingFailure
from .optim import AdamW, cosine_lr
from .prototypes import PrototypeSet

logger = logging.getLogger(__name__)


@dataclass
class StratificationScales:
    alpha_txt: float
    alpha_img: float


@dataclass
class AlignmentConfig:
    H: float = 0.1
    tau: float = 0.1
    beta: float = 0.2
    epochs: int = 50
    lr: float = 3e-3
    batch_size: int = 16
    alpha_img: float = None
    alpha_ratio: float = 0.5
    kappa: float = 1.0
    learn_kappa: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.H > 0 or not self.tau > 0:
            raise InvalidArgumentError("H and tau must be positive")
        if self.beta < 0:
            raise InvalidArgumentError("beta must be nonnegative")
        if not 0 < self.alpha_ratio:
            raise InvalidArgumentError("alpha_ratio must be positive")
        if self.alpha_img is not None and not self.alpha_img > 0:
            raise InvalidArgumentError("alpha_img must be positive")


@dataclass
class AlignedEmbedding:
    """Output of :func:`run_alignment`.

    ``image_points`` are the embedded support features (the flow sources),
    ``prototype_set`` the embedded prototypes (the flow targets). The learned
    head is kept so that held-out features can be embedded identically.
    """

    image_points: np.ndarray
    labels: np.ndarray
    prototype_set: PrototypeSet
    scales: StratificationScales
    kappa: float
    projection: np.ndarray
    history: list = field(default_factory=list)

    def tangent_images(self, features):
        """Scaled, projected features: the Euclidean coordinates lifted at the origin."""
        return self.scales.alpha_img * np.asarray(features, dtype=np.float64) @ self.projection.T

    def tangent_prototypes(self, raw):
        return self.scales.alpha_txt * np.asarray(raw, dtype=np.float64) @ self.projection.T

    def embed_images(self, features):
        return _embed(self.tangent_images(features), self.kappa)

    def embed_prototypes(self, raw):
        return _embed(self.tangent_prototypes(raw), self.kappa)


def _embed(tangent_space, kappa):
    tangent = lorentz.lift_to_tangent_at_origin(tangent_space, 1.0)
    base = np.broadcast_to(lorentz.origin(tangent.shape[-1] - 1, kappa), tangent.shape)
    return lorentz.exp_map(base, tangent, kappa)


# ----------------------------------------------------------------- losses


def _space_norm(x1):
    norm = np.linalg.norm(np.asarray(x1, dtype=np.float64)[..., 1:], axis=-1)
    if np.any(norm == 0.0):
        raise DegenerateInputError("cone aperture is undefined at the origin")
    return norm


def cone_aperture(x1, H):
    """Half-aperture ``arcsin(min(1, 2H / |space(x1)|))`` of the entailment cone."""
    return np.arcsin(np.clip(2.0 * H / _space_norm(x1), -1.0, 1.0))


def _angle(u, w):
    cos = lorentz.lorentz_inner(u, w) / (lorentz.lorentz_norm(u) * lorentz.lorentz_norm(w))
    return np.arccos(np.clip(cos, -1.0, 1.0))


def exterior_angle(x1, x0, kappa):
    """``pi`` minus the angle at ``x1`` between the geodesics to the origin and to ``x0``."""
    x1, x0 = np.broadcast_arrays(np.asarray(x1, dtype=np.float64), np.asarray(x0, dtype=np.float64))
    _space_norm(x1)
    if np.any(lorentz.geodesic_distance(x1, x0, kappa) == 0.0):
        raise DegenerateInputError("exterior angle is undefined for coincident points")
    o = np.broadcast_to(lorentz.origin(x1.shape[-1] - 1, kappa), x1.shape)
    to_origin = lorentz.log_map(x1, o, kappa)
    to_child = lorentz.log_map(x1, x0, kappa)
    return np.pi - _angle(to_origin, to_child)


def entailment_loss(x0, x1, H, kappa):
    """Cone violation ``max(0, exterior_angle(x1, x0) - aperture(x1))``."""
    return np.maximum(0.0, exterior_angle(x1, x0, kappa) - cone_aperture(x1, H))


def softmax_xent(dist, labels, tau):
    """``-log softmax(-dist / tau)[label]`` per row, max-subtracted.

    The one kernel behind both the alignment contrastive loss and the
    inter-class decoupling loss of flow training.
    """
    logits = np.atleast_2d(dist) * (-1.0 / tau)
    labels = np.atleast_1d(labels)
    m = logits.max(axis=-1, keepdims=True)
    lse = (m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True)))[:, 0]
    return lse - logits[np.arange(len(labels)), labels]


def hyperbolic_contrastive_loss(x0, prototypes, label, tau, kappa=None):
    """Contrastive loss of points ``x0`` against a prototype set.

    ``prototypes`` is a :class:`PrototypeSet` (its curvature is used when
    ``kappa`` is omitted) or an ``(N, n+1)`` array. Scalar for one point,
    a vector for a batch.
    """
    if isinstance(prototypes, PrototypeSet):
        points = prototypes.points
        kappa = prototypes.kappa if kappa is None else kappa
    else:
        points = np.atleast_2d(np.asarray(prototypes, dtype=np.float64))
    if points.shape[0] == 0:
        raise InvalidArgumentError("prototype set is empty")
    if not tau > 0:
        raise InvalidArgumentError("tau must be positive")
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if np.any(labels < 0) or np.any(labels >= points.shape[0]):
        raise InvalidArgumentError("label out of range")
    x0 = np.asarray(x0, dtype=np.float64)
    dist = lorentz.pairwise_distance(np.atleast_2d(x0), points, kappa)
    loss = softmax_xent(dist, labels, tau)
    return float(loss[0]) if x0.ndim == 1 else loss


# ----------------------------------------------------------------- training


def _param_tensors(params):
    return {k: ad.Tensor(v, requires_grad=True) for k, v in params.items()}


def alignment_objective(params, features, labels, raw_prototypes, config):
    """Batch objective as tape tensors: ``(total, contrastive, entailment)``.

    ``params`` holds ``projection`` and the logs of ``alpha_txt``,
    ``alpha_img`` and ``kappa`` (positivity by reparameterization).
    """
    P = params["projection"]
    kappa = ad.exp(params["log_kappa"])
    a_txt = ad.exp(params["log_alpha_txt"])
    a_img = ad.exp(params["log_alpha_img"])
    x0 = lad.exp_map0((ad.as_tensor(features) @ P.T) * a_img, kappa)
    x1 = lad.exp_map0((ad.as_tensor(raw_prototypes) @ P.T) * a_txt, kappa)
    con = lad.contrastive_loss(lad.distance_matrix(x0, x1, kappa), labels, config.tau).mean()
    ent = lad.entailment_loss(x0, x1[labels], config.H, kappa).mean()
    return con + config.beta * ent, con, ent


def initial_alpha_img(features, config):
    """``config.alpha_img``, or by default the inverse mean feature norm.

    The automatic value puts the average image at unit tangent norm, the
    scale of normalized encoder embeddings.
    """
    if config.alpha_img is not None:
        return float(config.alpha_img)
    mean_norm = float(np.linalg.norm(features, axis=1).mean())
    if not mean_norm > 0:
        raise DegenerateInputError("all support features are zero")
    return 1.0 / mean_norm


def _initial_params(n, config, alpha_img):
    return {
        "projection": np.eye(n),
        "log_alpha_txt": np.array(math.log(config.alpha_ratio * alpha_img)),
        "log_alpha_img": np.array(math.log(alpha_img)),
        "log_kappa": np.array(math.log(config.kappa)),
    }


def _evaluate(params, features, labels, raw_prototypes, config):
    total, con, ent = alignment_objective(_param_tensors(params), features, labels, raw_prototypes, config)
    return {"objective": total.item(), "contrastive": con.item(), "entailment": ent.item()}


def run_alignment(features, labels, raw_prototypes, config=None):
    """Fit the alignment head on a labeled support set.

    ``history[0]`` holds the losses at initialization and ``history[e]`` the
    full-support losses after epoch ``e``. Deterministic given ``config.seed``.
    """
    config = config or AlignmentConfig()
    features = np.asarray(features, dtype=np.float64)
    raw_prototypes = np.asarray(raw_prototypes, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or raw_prototypes.ndim != 2 or features.shape[1] != raw_prototypes.shape[1]:
        raise InvalidArgumentError("features and prototypes need matching 2-D shapes")
    if labels.shape != (features.shape[0],) or np.any(labels < 0) or np.any(labels >= len(raw_prototypes)):
        raise InvalidArgumentError("labels must index the prototype rows")
    n = features.shape[1]
    rng = np.random.default_rng(config.seed)
    params = _initial_params(n, config, initial_alpha_img(features, config))
    opt = AdamW(params, lr=config.lr, weight_decay=0.0)
    m = features.shape[0]
    batch = min(config.batch_size, m)
    steps_per_epoch = math.ceil(m / batch)
    horizon = config.epochs * steps_per_epoch
    history = [_evaluate(params, features, labels, raw_prototypes, config)]
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(m)
        for start in range(0, m, batch):
            idx = order[start:start + batch]
            tensors = _param_tensors(params)
            total, _, _ = alignment_objective(tensors, features[idx], labels[idx], raw_prototypes, config)
            if not math.isfinite(total.item()):
                raise TrainingFailure("alignment objective is not finite", epoch)
            total.backward()
            grads = {k: t.grad for k, t in tensors.items() if t.grad is not None}
            if not config.learn_kappa:
                grads.pop("log_kappa", None)
            opt.step(grads, lr=cosine_lr(step, config.lr, horizon))
            step += 1
        record = _evaluate(params, features, labels, raw_prototypes, config)
        if not math.isfinite(record["objective"]):
            raise TrainingFailure("alignment objective is not finite", epoch)
        history.append(record)
        logger.debug("align epoch %d: %s", epoch, record)

    kappa = float(np.exp(params["log_kappa"]))
    scales = StratificationScales(float(np.exp(params["log_alpha_txt"])), float(np.exp(params["log_alpha_img"])))
    emb = AlignedEmbedding(
        image_points=None,
        labels=labels,
        prototype_set=None,
        scales=scales,
        kappa=kappa,
        projection=params["projection"].copy(),
        history=history,
    )
    emb.image_points = emb.embed_images(features)
    emb.prototype_set = PrototypeSet(emb.embed_prototypes(raw_prototypes), kappa)
    if scales.alpha_txt >= scales.alpha_img:
        logger.info("alignment ended with alpha_txt >= alpha_img (%.4g >= %.4g)", scales.alpha_txt, scales.alpha_img)
    return emb


# ----------------------------------------------------------------- persistence


def save_embedding(path, emb):
    """Write an :class:`AlignedEmbedding` to an ``.npz`` archive (history excluded)."""
    np.savez(
        path,
        image_points=emb.image_points,
        labels=emb.labels,
        prototype_points=emb.prototype_set.points,
        class_ids=emb.prototype_set.class_ids,
        kappa=np.float64(emb.kappa),
        alpha_txt=np.float64(emb.scales.alpha_txt),
        alpha_img=np.float64(emb.scales.alpha_img),
        projection=emb.projection,
    )


def load_embedding(path):
    with np.load(path) as z:
        kappa = float(z["kappa"])
        return AlignedEmbedding(
            image_points=z["image_points"],
            labels=z["labels"],
            prototype_set=PrototypeSet(z["prototype_points"], kappa, z["class_ids"]),
            scales=StratificationScales(float(z["alpha_txt"]), float(z["alpha_img"])),
            kappa=kappa,
            projection=z["projection"],
        )
