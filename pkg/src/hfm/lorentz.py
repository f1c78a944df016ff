"""Lorentz-model primitives on plain numpy arrays.

A point of the hyperboloid with curvature ``-kappa`` is an array whose last
axis holds the ambient coordinates ``(time, space_1, ..., space_n)``. Leading
axes are batch axes and broadcast the usual way. All arithmetic is float64.
"""
import math

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError

MANIFOLD_TOL = 1e-6
TANGENT_TOL = 1e-6


def check_kappa(kappa):
    kappa = float(kappa)
    if not (kappa > 0.0 and math.isfinite(kappa)):
        raise InvalidArgumentError(f"curvature parameter kappa must be positive and finite, got {kappa}")
    return kappa


def _as_ambient(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0 or a.shape[-1] < 2:
        raise InvalidArgumentError(f"{name} needs an ambient axis of length >= 2, got shape {a.shape}")
    return a


def _pair(a, b, names=("x", "y")):
    a = _as_ambient(a, names[0])
    b = _as_ambient(b, names[1])
    if a.shape[-1] != b.shape[-1]:
        raise InvalidArgumentError(
            f"ambient dimension mismatch: {names[0]} has {a.shape[-1]}, {names[1]} has {b.shape[-1]}"
        )
    try:
        a, b = np.broadcast_arrays(a, b)
    except ValueError as exc:
        raise InvalidArgumentError(str(exc)) from None
    return a, b


def lorentz_inner(x, y):
    """``-x0*y0 + <x_space, y_space>`` over the last axis."""
    x, y = _pair(x, y)
    return -x[..., 0] * y[..., 0] + np.einsum("...i,...i->...", x[..., 1:], y[..., 1:])


def lorentz_norm(v):
    """Lorentz norm of tangent (space-like) vectors; negative squares clip to 0."""
    v = _as_ambient(v, "v")
    return np.sqrt(np.maximum(lorentz_inner(v, v), 0.0))


def origin(n, kappa=1.0):
    """The hyperboloid's apex ``(1/sqrt(kappa), 0, ..., 0)`` in ``n + 1`` ambient dims."""
    kappa = check_kappa(kappa)
    o = np.zeros(int(n) + 1)
    o[0] = 1.0 / math.sqrt(kappa)
    return o


def manifold_residual(x, kappa):
    """``|<x,x>_L + 1/kappa|``; zero for an exact hyperboloid point."""
    kappa = check_kappa(kappa)
    return np.abs(lorentz_inner(x, x) + 1.0 / kappa)


def _check_on_manifold(x, kappa, name):
    resid = manifold_residual(x, kappa)
    scale = np.maximum(1.0, x[..., 0] ** 2)
    if np.any(~np.isfinite(x)) or np.any(resid > MANIFOLD_TOL * scale) or np.any(x[..., 0] <= 0.0):
        raise InvalidArgumentError(f"{name} is not on the hyperboloid of curvature -{kappa}")


def geodesic_distance(x, y, kappa):
    """Geodesic distance ``arcosh(-kappa <x,y>_L) / sqrt(kappa)``.

    Evaluated through the chord form (see :mod:`hfm._kernels`), which never
    needs the arcosh clamp and returns exactly 0 for identical inputs.
    """
    kappa = check_kappa(kappa)
    x, y = _pair(x, y)
    shape = x.shape
    d = _kernels.rowwise_dist(x.reshape(-1, shape[-1]), y.reshape(-1, shape[-1]), kappa)
    return d.reshape(shape[:-1]) if len(shape) > 1 else d[0]


def pairwise_distance(x, y, kappa):
    """Distance matrix between two stacks of points, shape ``(M, N)``."""
    kappa = check_kappa(kappa)
    x = np.atleast_2d(_as_ambient(x, "x"))
    y = np.atleast_2d(_as_ambient(y, "y"))
    if x.shape[-1] != y.shape[-1]:
        raise InvalidArgumentError("ambient dimension mismatch")
    return _kernels.pairwise_dist(x, y, kappa)


def lift_to_tangent_at_origin(feature, scale=1.0):
    """Embed Euclidean features as tangent vectors ``(0, scale * feature)`` at the origin."""
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim == 0 or feature.shape[-1] < 1:
        raise InvalidArgumentError("feature must have a trailing axis")
    if not np.all(np.isfinite(feature)):
        raise InvalidArgumentError("feature contains non-finite values")
    scale = float(scale)
    if not (scale > 0.0 and math.isfinite(scale)):
        raise InvalidArgumentError(f"scale must be positive, got {scale}")
    out = np.zeros(feature.shape[:-1] + (feature.shape[-1] + 1,))
    out[..., 1:] = scale * feature
    return out


def tangent_project(base, a, kappa):
    """Orthogonal projection ``a + kappa <base,a>_L base`` onto the tangent space at ``base``."""
    kappa = check_kappa(kappa)
    base, a = _pair(base, a, ("base", "a"))
    return a + kappa * lorentz_inner(base, a)[..., None] * base


def reproject_to_manifold(a, kappa):
    """Keep the space part and recompute ``time = sqrt(1/kappa + |space|^2)``."""
    kappa = check_kappa(kappa)
    a = _as_ambient(a, "a")
    out = np.array(a, dtype=np.float64, copy=True)
    out[..., 0] = np.sqrt(1.0 / kappa + np.einsum("...i,...i->...", a[..., 1:], a[..., 1:]))
    return out


def exp_map(base, v, kappa):
    """Exponential map ``cosh(r) base + sinh(r)/r v`` with ``r = sqrt(kappa)|v|_L``.

    The result is reprojected onto the hyperboloid. ``v`` must be tangent at
    ``base``: ``|<base,v>_L|`` may not exceed ``1e-6 * max(1, |base| |v|)``.
    """
    kappa = check_kappa(kappa)
    base, v = _pair(base, v, ("base", "v"))
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("tangent vector contains non-finite values")
    tol = TANGENT_TOL * np.maximum(1.0, np.linalg.norm(base, axis=-1) * np.linalg.norm(v, axis=-1))
    if np.any(np.abs(lorentz_inner(base, v)) > tol):
        raise InvalidArgumentError("v is not tangent at base")
    shape = base.shape
    out = _kernels.exp_map_rows(base.reshape(-1, shape[-1]), v.reshape(-1, shape[-1]), kappa)
    return out.reshape(shape)


def log_map(base, x, kappa):
    """Logarithmic map, the inverse of :func:`exp_map`.

    The returned tangent vector has Lorentz norm equal to ``d(base, x)``; for
    ``x == base`` it is the zero vector.
    """
    kappa = check_kappa(kappa)
    base, x = _pair(base, x, ("base", "x"))
    _check_on_manifold(base, kappa, "base")
    _check_on_manifold(x, kappa, "x")
    shape = base.shape
    out = _kernels.log_map_rows(base.reshape(-1, shape[-1]), x.reshape(-1, shape[-1]), kappa)
    return out.reshape(shape)


def geodesic_interpolate(x0, x1, t, kappa):
    """Point at fraction ``t`` of the geodesic from ``x0`` to ``x1``.

    ``t`` may be a scalar or an array broadcasting against the batch axes.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise InvalidArgumentError("interpolation time must lie in [0, 1]")
    v = log_map(x0, x1, kappa)
    x0 = np.broadcast_to(np.asarray(x0, dtype=np.float64), v.shape)
    return exp_map(x0, t[..., None] * v, kappa)
