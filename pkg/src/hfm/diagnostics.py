"""Path-entanglement diagnostics for transport trajectories.

Two numbers are reported. The corridor-violation rate is the fraction of
intermediate states (the start state excluded) whose nearest prototype is not
the trajectory's true class. The crossing count projects every state onto the
top two principal axes and counts proper intersections between polyline
segments of trajectories with different true labels.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError
from .inference import Trajectory
from .prototypes import PrototypeSet

logger = logging.getLogger(__name__)


@dataclass
class EntanglementReport:
    corridor_violation_rate: float
    crossing_count: int
    per_class: dict = field(default_factory=dict)
    n_states: int = 0

    def as_dict(self):
        return {
            "corridor_violation_rate": self.corridor_violation_rate,
            "crossing_count": self.crossing_count,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "n_states": self.n_states,
        }


def _states(tr):
    return tr.states if isinstance(tr, Trajectory) else np.atleast_2d(np.asarray(tr, dtype=np.float64))


def nearest_prototype(states, prototypes, kappa=None):
    """Index of the nearest prototype for each row.

    Geodesic distance for a :class:`PrototypeSet` (or an array with
    ``kappa``), Euclidean distance for a plain array without ``kappa``.
    """
    states = np.atleast_2d(states)
    if isinstance(prototypes, PrototypeSet):
        return prototypes.distances(states).argmin(axis=1)
    prototypes = np.atleast_2d(np.asarray(prototypes, dtype=np.float64))
    if kappa is not None:
        return _kernels.pairwise_dist(states, prototypes, kappa).argmin(axis=1)
    d2 = ((states[:, None, :] - prototypes[None, :, :]) ** 2).sum(axis=-1)
    return d2.argmin(axis=1)


def _violation_counts(trajectories, prototypes, labels, kappa):
    labels = np.asarray(labels, dtype=np.int64)
    if len(trajectories) == 0:
        raise InvalidArgumentError("no trajectories")
    if labels.shape != (len(trajectories),):
        raise InvalidArgumentError("one true label per trajectory required")
    bad, total = {}, {}
    for tr, y in zip(trajectories, labels):
        inner = _states(tr)[1:]
        y = int(y)
        total[y] = total.get(y, 0) + inner.shape[0]
        if inner.shape[0]:
            bad[y] = bad.get(y, 0) + int(np.count_nonzero(nearest_prototype(inner, prototypes, kappa) != y))
    return bad, total


def corridor_violation_rate(trajectories, prototypes, labels, kappa=None, per_class=False):
    """Fraction of post-start states nearest a wrong prototype.

    With ``per_class`` a ``{class: rate}`` dict is returned alongside.
    """
    bad, total = _violation_counts(trajectories, prototypes, labels, kappa)
    n = sum(total.values())
    rate = sum(bad.values()) / n if n else 0.0
    if not per_class:
        return rate
    return rate, {c: (bad.get(c, 0) / total[c] if total[c] else 0.0) for c in sorted(total)}


# ----------------------------------------------------------------- PCA


def _first_nonzero_positive(v):
    big = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    return -v if v[big[0]] < 0 else v


def principal_axes(points, k=2, seed=0, max_iter=2000, tol=1e-13):
    """Top ``k`` principal axes by power iteration with deflation.

    Returns ``(axes, mean)`` where ``axes`` has at most ``k`` rows; fewer are
    returned (with a warning) when the centered data has lower rank. Each axis
    is oriented so its first nonzero loading is positive.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / max(points.shape[0] - 1, 1)
    scale = np.trace(cov)
    rng = np.random.default_rng(seed)
    axes = []
    for _ in range(k):
        v = rng.standard_normal(cov.shape[0])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = cov @ v
            norm = np.linalg.norm(w)
            if norm == 0.0:
                break
            w /= norm
            done = min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < tol
            v = w
            if done:
                break
        lam = float(v @ cov @ v)
        if not lam > 1e-12 * max(scale, 1e-300):
            break
        v = _first_nonzero_positive(v)
        axes.append(v)
        cov = cov - lam * np.outer(v, v)
    if len(axes) < k:
        warnings.warn(f"trajectory states span rank {len(axes)} < {k}; projecting in the available rank", RuntimeWarning)
    return np.array(axes).reshape(len(axes), points.shape[1]), mean


def project_2d(states, axes, mean):
    coords = (np.atleast_2d(states) - mean) @ axes.T
    if coords.shape[1] < 2:
        coords = np.hstack([coords, np.zeros((coords.shape[0], 2 - coords.shape[1]))])
    return coords


def projected_trajectories(trajectories, seed=0):
    """2-D coordinates of every trajectory on the shared top-2 principal plane."""
    states = [_states(tr) for tr in trajectories]
    axes, mean = principal_axes(np.vstack(states), 2, seed)
    return [project_2d(s, axes, mean) for s in states]


def _segments(paths, labels):
    segs, seg_labels = [], []
    for path, y in zip(paths, labels):
        if path.shape[0] < 2:
            continue
        segs.append(np.hstack([path[:-1], path[1:]]))
        seg_labels.append(np.full(path.shape[0] - 1, int(y)))
    if not segs:
        return np.zeros((0, 4)), np.zeros(0, dtype=np.int64)
    return np.vstack(segs), np.concatenate(seg_labels)


def count_polyline_crossings(paths, labels):
    """Proper intersections between segments of 2-D polylines with different labels."""
    segs, seg_labels = _segments([np.atleast_2d(p) for p in paths], labels)
    return _kernels.count_crossings(segs, seg_labels)


def projected_crossings(trajectories, labels, seed=0):
    if len(trajectories) < 2:
        raise InvalidArgumentError("need at least two trajectories")
    labels = np.asarray(labels, dtype=np.int64)
    return count_polyline_crossings(projected_trajectories(trajectories, seed), labels)


def entanglement_report(trajectories, prototypes, labels, kappa=None, seed=0):
    rate, per_class = corridor_violation_rate(trajectories, prototypes, labels, kappa, per_class=True)
    crossings = projected_crossings(trajectories, labels, seed) if len(trajectories) > 1 else 0
    n_states = sum(_states(tr).shape[0] - 1 for tr in trajectories)
    return EntanglementReport(rate, crossings, per_class, n_states)
