"""AdamW with decoupled weight decay, and a cosine learning-rate schedule."""
import math

import numpy as np

from . import _kernels


def cosine_lr(step, base_lr, horizon):
    """Cosine annealing from ``base_lr`` at step 0 towards 0 at ``horizon``."""
    if horizon <= 0:
        return base_lr
    frac = min(step, horizon) / horizon
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * frac))


class AdamW:
    """AdamW over a dict of numpy arrays, updated in place.

    Parameters
    ----------
    params : dict[str, numpy.ndarray]
        Parameter arrays; ``step`` mutates them.
    lr : float
        Learning rate used when ``step`` is not given one explicitly.
    betas, eps, weight_decay
        As in Loshchilov & Hutter; decay is applied as ``p -= lr * wd * p``.
    """

    def __init__(self, params, lr=2e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-4):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if not p.flags.c_contiguous or p.dtype != np.float64:
                raise TypeError(f"parameter {name} must be a contiguous float64 array")
            _kernels.adamw_update(p, g, self.m[name], self.v[name], lr, b1, b2, c1, c2, self.eps, self.weight_decay)
