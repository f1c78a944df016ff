"""Differentiable twins of the Lorentz primitives, built on :mod:`hfm.autodiff`.

Inputs are :class:`~hfm.autodiff.Tensor` (or arrays, treated as constants)
with the ambient axis last. ``kappa`` may be a float or a scalar tensor, which
is how the alignment stage learns the curvature. Forward values agree with
:mod:`hfm.lorentz` to round-off; the tests hold the two together.
"""
import math

import numpy as np

from . import autodiff as ad
from ._kernels import FAR


def inner(x, y):
    """Row-wise Lorentz inner product over the last axis."""
    x, y = ad.as_tensor(x), ad.as_tensor(y)
    return (x[..., 1:] * y[..., 1:]).sum(axis=-1) - x[..., 0] * y[..., 0]


def _sqrt_kappa(kappa):
    return ad.sqrt(kappa) if isinstance(kappa, ad.Tensor) else math.sqrt(kappa)


def _col(t):
    return t[..., None]


def tangent_project(base, a, kappa):
    base, a = ad.as_tensor(base), ad.as_tensor(a)
    return a + _col(kappa * inner(base, a)) * base


def reproject(space, kappa):
    """Assemble a hyperboloid point from its space part."""
    time = ad.sqrt(1.0 / kappa + (space * space).sum(axis=-1))
    return ad.concat([_col(time), space], axis=-1)


def exp_map(base, w, kappa):
    """``exp_base(w)``; smooth at ``w = 0`` because it only uses ``<w,w>_L``."""
    base, w = ad.as_tensor(base), ad.as_tensor(w)
    s = kappa * ad.clip_min(inner(w, w), 0.0)
    space = _col(ad.cosh_sqrt(s)) * base[..., 1:] + _col(ad.sinhc_sqrt(s)) * w[..., 1:]
    return reproject(space, kappa)


def exp_map0(space, kappa):
    """``exp`` at the origin of the tangent vector ``(0, space)``."""
    space = ad.as_tensor(space)
    s = kappa * (space * space).sum(axis=-1)
    return reproject(_col(ad.sinhc_sqrt(s)) * space, kappa)


def half_chord(x, y, kappa):
    """``(cosh(sqrt(kappa) d) - 1) / 2`` between broadcast rows of ``x`` and ``y``."""
    x, y = ad.as_tensor(x), ad.as_tensor(y)
    delta = x - y
    near = 0.25 * kappa * inner(delta, delta)
    far = -kappa * inner(x, y)
    mask = (far.value >= FAR).astype(np.float64)
    return ad.clip_min(mask * (0.5 * (far - 1.0)) + (1.0 - mask) * near, 0.0)


def distance(x, y, kappa):
    return (2.0 / _sqrt_kappa(kappa)) * ad.asinh_sqrt(half_chord(x, y, kappa))


def sq_distance(x, y, kappa):
    """Squared geodesic distance, differentiable through coincidence."""
    return (4.0 / kappa) * ad.asinh_sqrt_sq(half_chord(x, y, kappa))


def distance_matrix(x, protos, kappa):
    """``(B, N)`` distances from each row of ``x`` to each prototype."""
    return distance(x[:, None, :], protos[None, :, :], kappa)


def exterior_angle(x1, x0, kappa):
    """Exterior angle at ``x1`` of the triangle (origin, ``x1``, ``x0``).

    This is the Lorentzian angle between the tangent directions at ``x1``
    towards the origin and towards ``x0``, with the inner products expanded
    in closed form: ``arccos((t0 + c t1) / (|s1| sqrt(c^2 - 1)))`` where
    ``c = kappa <x1, x0>_L``.
    """
    x1, x0 = ad.as_tensor(x1), ad.as_tensor(x0)
    s = half_chord(x1, x0, kappa)
    c = -(1.0 + 2.0 * s)
    space_norm = ad.sqrt((x1[..., 1:] * x1[..., 1:]).sum(axis=-1))
    den = space_norm * 2.0 * ad.sqrt(s * (1.0 + s))
    return ad.arccos_clipped((x0[..., 0] + c * x1[..., 0]) / den)


def cone_aperture(x1, H):
    x1 = ad.as_tensor(x1)
    space_norm = ad.sqrt((x1[..., 1:] * x1[..., 1:]).sum(axis=-1))
    return ad.arcsin_clipped((2.0 * H) / space_norm)


def entailment_loss(x0, x1, H, kappa):
    return ad.relu(exterior_angle(x1, x0, kappa) - cone_aperture(x1, H))


def contrastive_loss(dist, labels, tau):
    """Per-row ``-log softmax(-dist / tau)[label]`` with max subtraction."""
    logits = dist * (-1.0 / tau)
    return ad.logsumexp(logits, axis=-1) - ad.take_rows(logits, labels)
