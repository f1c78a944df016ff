"""Transport of test points by Riemannian Euler steps, with diameter-based stopping."""
import math
from dataclasses import dataclass

import numpy as np

from . import lorentz
from .errors import InvalidArgumentError
from .prototypes import PrototypeSet

THRESHOLD_HIT = "threshold-hit"
HORIZON = "horizon"


def velocity(field, x, t):
    """Raw ambient output of ``field`` (a network or any ``(x, t) -> ambient`` callable)."""
    return np.asarray(field(x, t), dtype=np.float64)


def euler_step(field, x_hat, t, delta, kappa):
    """``exp_{x_hat}(delta * P(F(x_hat, t)))`` where ``P`` projects onto the tangent space."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    v = lorentz.tangent_project(x_hat, velocity(field, x_hat, t), kappa)
    return lorentz.exp_map(x_hat, delta * v, kappa)


def semantic_diameter(prototypes, kappa=None):
    if isinstance(prototypes, PrototypeSet):
        return prototypes.diameter
    if kappa is None:
        raise InvalidArgumentError("kappa is required for raw prototype arrays")
    return PrototypeSet(prototypes, kappa).diameter


def stopping_threshold(n_classes, d_txt):
    if n_classes < 1:
        raise InvalidArgumentError("need at least one class")
    return 0.5 * math.log10(n_classes) * d_txt


def n_steps(delta):
    """Steps needed for ``k * delta`` to reach 1 (the horizon)."""
    if not 0 < delta <= 1:
        raise InvalidArgumentError("delta must lie in (0, 1]")
    return max(1, math.ceil(1.0 / delta - 1e-9))


@dataclass
class Trajectory:
    states: np.ndarray
    times: np.ndarray
    stop_index: int
    stop_reason: str

    @property
    def t_star(self):
        return float(self.times[self.stop_index])

    def __len__(self):
        return self.states.shape[0]


def _as_set(prototypes, kappa):
    if isinstance(prototypes, PrototypeSet):
        return prototypes
    return PrototypeSet(prototypes, kappa)


def transport_batch(field, x0, prototypes, delta, kappa=None):
    """Transport every row of ``x0``; rows are stepped together until each stops.

    Returns one :class:`Trajectory` per row, in row order.
    """
    protos = _as_set(prototypes, kappa)
    kappa = protos.kappa
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    threshold = stopping_threshold(len(protos), protos.diameter)
    horizon = n_steps(delta)
    m = x0.shape[0]
    states = [[row] for row in x0]
    reason = [HORIZON] * m
    active = np.arange(m)
    current = x0.copy()
    for k in range(horizon):
        if active.size == 0:
            break
        nxt = euler_step(field, current[active], k * delta, delta, kappa)
        current[active] = nxt
        hit = protos.distances(nxt).min(axis=1) <= threshold
        for j, i in enumerate(active):
            states[i].append(nxt[j])
            if hit[j]:
                reason[i] = THRESHOLD_HIT
        active = active[~hit]
    out = []
    for i in range(m):
        st = np.array(states[i])
        times = delta * np.arange(st.shape[0])
        out.append(Trajectory(st, times, st.shape[0] - 1, reason[i]))
    return out


def transport_with_stopping(field, x0, prototypes, delta, kappa=None):
    """Single-point transport; the threshold is checked only after each step."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1:
        raise InvalidArgumentError("x0 must be a single point; use transport_batch for many")
    return transport_batch(field, x0[None], prototypes, delta, kappa)[0]


def classify(trajectory, prototypes, kappa=None):
    """Argmin over classes of the distance summed along the whole trajectory.

    Ties go to the lowest class index. Returns ``(class_id, scores)``.
    """
    protos = _as_set(prototypes, kappa)
    states = trajectory.states if isinstance(trajectory, Trajectory) else np.atleast_2d(trajectory)
    scores = protos.distances(states).sum(axis=0)
    return int(protos.class_ids[int(np.argmin(scores))]), scores


def class_probabilities(scores, n_states, tau=0.1):
    """Softmax of ``-mean distance / tau``; a read-only diagnostic view."""
    logits = -np.asarray(scores, dtype=np.float64) / (n_states * tau)
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


@dataclass
class Predictions:
    labels: np.ndarray
    scores: np.ndarray
    trajectories: list

    @property
    def t_star(self):
        return np.array([tr.t_star for tr in self.trajectories])

    @property
    def stop_reasons(self):
        return [tr.stop_reason for tr in self.trajectories]


def predict(field, x0, prototypes, delta, kappa=None):
    protos = _as_set(prototypes, kappa)
    trajs = transport_batch(field, x0, protos, delta)
    labels, scores = zip(*(classify(tr, protos) for tr in trajs)) if trajs else ((), ())
    return Predictions(np.array(labels, dtype=np.int64), np.array(scores).reshape(len(trajs), len(protos)), trajs)
