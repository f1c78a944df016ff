"""Class prototypes on the hyperboloid."""
from dataclasses import dataclass, field

import numpy as np

from . import lorentz
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class PrototypeSet:
    """``N`` class prototypes with their cached semantic diameter.

    ``diameter`` is the largest pairwise geodesic distance (0 for one class).
    """

    points: np.ndarray
    kappa: float
    class_ids: np.ndarray = None
    diameter: float = field(init=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.shape[0] == 0:
            raise InvalidArgumentError("prototype set is empty")
        kappa = lorentz.check_kappa(self.kappa)
        ids = np.arange(pts.shape[0]) if self.class_ids is None else np.asarray(self.class_ids, dtype=np.int64)
        if ids.shape != (pts.shape[0],):
            raise InvalidArgumentError("class_ids must give one id per prototype")
        pts.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "class_ids", ids)
        diam = float(lorentz.pairwise_distance(pts, pts, kappa).max()) if len(pts) > 1 else 0.0
        object.__setattr__(self, "diameter", diam)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1] - 1

    def distances(self, x):
        """``(M, N)`` geodesic distances from the rows of ``x`` to every prototype."""
        return lorentz.pairwise_distance(x, self.points, self.kappa)
