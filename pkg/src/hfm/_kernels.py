"""Row-batched hot kernels with numba and numpy implementations.

Every public kernel dispatches on :func:`hfm._accel.numba_enabled` at call
time. Both paths evaluate the same closed forms; they agree to round-off but
are not promised to be bit-identical to each other.

Distances and log maps go through the Minkowski chord ``x - y``::

    d(x, y) = 2/sqrt(k) * asinh(sqrt(k * <x-y, x-y>_L) / 2)

which is algebraically equal to ``arcosh(-k <x,y>_L) / sqrt(k)`` but keeps full
relative precision when the two points nearly coincide. Far apart (``-k <x,y>_L``
at least ``FAR``) the inner-product form is the accurate one, so both are used,
switching on that threshold.
"""
import math

import numpy as np

from . import _accel
from ._accel import njit

SINHC_CUTOFF = 1e-12
FAR = 2.0
_SERIES_CUTOFF = 1e-8


# ---------------------------------------------------------------- numpy path


def _sinhc_np(u):
    out = np.ones_like(u)
    big = u >= SINHC_CUTOFF
    out[big] = np.sinh(u[big]) / u[big]
    return out


def _asinhc_np(s):
    """asinh(sqrt(s)) / (sqrt(s) * sqrt(1 + s)), with its limit 1 at s = 0."""
    out = 1.0 - 2.0 * s / 3.0
    big = s >= _SERIES_CUTOFF
    r = np.sqrt(s[big])
    out[big] = np.arcsinh(r) / (r * np.sqrt(1.0 + s[big]))
    return out


def _tangent_sq_norm_np(base, v, kappa):
    # <v, v>_L with v0 eliminated through tangency; the naive |v~|^2 - v0^2
    # loses about log10(kappa * b0^2) digits far from the origin
    bs, vs = base[:, 1:], v[:, 1:]
    bn2 = np.einsum("ij,ij->i", bs, bs)
    coef = np.einsum("ij,ij->i", bs, vs) / np.where(bn2 > 0.0, bn2, 1.0)
    perp = vs - coef[:, None] * bs
    num = np.einsum("ij,ij->i", vs, vs) / kappa + np.einsum("ij,ij->i", perp, perp) * bn2
    return num / (1.0 / kappa + bn2)


def _exp_map_np(base, v, kappa):
    q = _tangent_sq_norm_np(base, v, kappa)
    u = math.sqrt(kappa) * np.sqrt(np.maximum(q, 0.0))
    space = np.cosh(u)[:, None] * base[:, 1:] + _sinhc_np(u)[:, None] * v[:, 1:]
    out = np.empty_like(base)
    out[:, 1:] = space
    out[:, 0] = np.sqrt(1.0 / kappa + np.einsum("ij,ij->i", space, space))
    return out


def _half_chord_np(x, y, kappa):
    """``kappa <x-y, x-y>_L / 4`` (= ``(cosh(sqrt(k) d) - 1) / 2``), clipped at 0."""
    delta = x - y
    q = -delta[..., 0] ** 2 + np.einsum("...i,...i->...", delta[..., 1:], delta[..., 1:])
    s = 0.25 * kappa * q
    far = -kappa * (-x[..., 0] * y[..., 0] + np.einsum("...i,...i->...", x[..., 1:], y[..., 1:]))
    s = np.where(far >= FAR, 0.5 * (far - 1.0), s)
    return np.maximum(s, 0.0)


def _log_map_np(base, x, kappa):
    delta = x - base
    s = _half_chord_np(x, base, kappa)
    out = _asinhc_np(s)[:, None] * (delta - 2.0 * s[:, None] * base)
    # clean residual normal component
    inner = -base[:, 0] * out[:, 0] + np.einsum("ij,ij->i", base[:, 1:], out[:, 1:])
    out += kappa * inner[:, None] * base
    out[s <= 0.0] = 0.0
    return out


def _pairwise_dist_np(x, y, kappa):
    s = _half_chord_np(x[:, None, :], y[None, :, :], kappa)
    return (2.0 / math.sqrt(kappa)) * np.arcsinh(np.sqrt(s))


def _rowwise_dist_np(x, y, kappa):
    s = _half_chord_np(x, y, kappa)
    return (2.0 / math.sqrt(kappa)) * np.arcsinh(np.sqrt(s))


def _orient_np(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _count_crossings_np(seg, labels):
    total = 0
    for i in range(seg.shape[0] - 1):
        rest = seg[i + 1:]
        keep = labels[i + 1:] != labels[i]
        if not keep.any():
            continue
        rest = rest[keep]
        px, py, qx, qy = seg[i]
        o1 = _orient_np(px, py, qx, qy, rest[:, 0], rest[:, 1])
        o2 = _orient_np(px, py, qx, qy, rest[:, 2], rest[:, 3])
        o3 = _orient_np(rest[:, 0], rest[:, 1], rest[:, 2], rest[:, 3], px, py)
        o4 = _orient_np(rest[:, 0], rest[:, 1], rest[:, 2], rest[:, 3], qx, qy)
        total += int(np.count_nonzero((o1 * o2 < 0.0) & (o3 * o4 < 0.0)))
    return total


def _adamw_np(p, g, m, v, lr, b1, b2, c1, c2, eps, wd):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    if wd:
        p *= 1.0 - lr * wd
    denom = np.sqrt(v / c2)
    denom += eps
    step = m / denom
    step *= lr / c1
    p -= step


# ---------------------------------------------------------------- numba path


@njit
def _exp_map_nb(base, v, kappa):
    n, d = base.shape
    out = np.empty((n, d))
    sk = math.sqrt(kappa)
    for i in range(n):
        bn2 = 0.0
        bv = 0.0
        vv = 0.0
        for j in range(1, d):
            bn2 += base[i, j] * base[i, j]
            bv += base[i, j] * v[i, j]
            vv += v[i, j] * v[i, j]
        coef = bv / bn2 if bn2 > 0.0 else 0.0
        pp = 0.0
        for j in range(1, d):
            r = v[i, j] - coef * base[i, j]
            pp += r * r
        q = (vv / kappa + pp * bn2) / (1.0 / kappa + bn2)
        u = sk * math.sqrt(q)
        c = math.cosh(u)
        s = 1.0
        if u >= SINHC_CUTOFF:
            s = math.sinh(u) / u
        ss = 0.0
        for j in range(1, d):
            val = c * base[i, j] + s * v[i, j]
            out[i, j] = val
            ss += val * val
        out[i, 0] = math.sqrt(1.0 / kappa + ss)
    return out


@njit
def _half_chord_nb(x, y, kappa):
    t = x[0] - y[0]
    q = -t * t
    far = x[0] * y[0]
    for j in range(1, x.shape[0]):
        t = x[j] - y[j]
        q += t * t
        far -= x[j] * y[j]
    far *= kappa
    if far >= FAR:
        s = 0.5 * (far - 1.0)
    else:
        s = 0.25 * kappa * q
    return max(s, 0.0)


@njit
def _log_map_nb(base, x, kappa):
    n, d = base.shape
    out = np.zeros((n, d))
    for i in range(n):
        s = _half_chord_nb(x[i], base[i], kappa)
        if s <= 0.0:
            continue
        if s < _SERIES_CUTOFF:
            f = 1.0 - 2.0 * s / 3.0
        else:
            r = math.sqrt(s)
            f = math.asinh(r) / (r * math.sqrt(1.0 + s))
        for j in range(d):
            out[i, j] = f * ((x[i, j] - base[i, j]) - 2.0 * s * base[i, j])
        inner = -base[i, 0] * out[i, 0]
        for j in range(1, d):
            inner += base[i, j] * out[i, j]
        for j in range(d):
            out[i, j] += kappa * inner * base[i, j]
    return out


@njit
def _pairwise_dist_nb(x, y, kappa):
    m, d = x.shape
    n = y.shape[0]
    out = np.empty((m, n))
    sk = math.sqrt(kappa)
    for i in range(m):
        for k in range(n):
            out[i, k] = (2.0 / sk) * math.asinh(math.sqrt(_half_chord_nb(x[i], y[k], kappa)))
    return out


@njit
def _rowwise_dist_nb(x, y, kappa):
    n, d = x.shape
    out = np.empty(n)
    sk = math.sqrt(kappa)
    for i in range(n):
        out[i] = (2.0 / sk) * math.asinh(math.sqrt(_half_chord_nb(x[i], y[i], kappa)))
    return out


@njit
def _orient_nb(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit
def _count_crossings_nb(seg, labels):
    total = 0
    n = seg.shape[0]
    for i in range(n - 1):
        px, py, qx, qy = seg[i, 0], seg[i, 1], seg[i, 2], seg[i, 3]
        for k in range(i + 1, n):
            if labels[k] == labels[i]:
                continue
            rx, ry, sx, sy = seg[k, 0], seg[k, 1], seg[k, 2], seg[k, 3]
            o1 = _orient_nb(px, py, qx, qy, rx, ry)
            o2 = _orient_nb(px, py, qx, qy, sx, sy)
            if o1 * o2 >= 0.0:
                continue
            o3 = _orient_nb(rx, ry, sx, sy, px, py)
            o4 = _orient_nb(rx, ry, sx, sy, qx, qy)
            if o3 * o4 < 0.0:
                total += 1
    return total


@njit
def _adamw_nb(p, g, m, v, lr, b1, b2, c1, c2, eps, wd):
    decay = 1.0 - lr * wd
    for i in range(p.size):
        mi = b1 * m[i] + (1.0 - b1) * g[i]
        vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        m[i] = mi
        v[i] = vi
        p[i] = p[i] * decay - (lr / c1) * mi / (math.sqrt(vi / c2) + eps)


# ---------------------------------------------------------------- dispatch


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def exp_map_rows(base, v, kappa):
    """Row-wise exponential map with time-coordinate reprojection."""
    base, v = _f64(base), _f64(v)
    if _accel.numba_enabled():
        return _exp_map_nb(base, v, float(kappa))
    return _exp_map_np(base, v, float(kappa))


def log_map_rows(base, x, kappa):
    base, x = _f64(base), _f64(x)
    if _accel.numba_enabled():
        return _log_map_nb(base, x, float(kappa))
    return _log_map_np(base, x, float(kappa))


def pairwise_dist(x, y, kappa):
    x, y = _f64(x), _f64(y)
    if _accel.numba_enabled():
        return _pairwise_dist_nb(x, y, float(kappa))
    return _pairwise_dist_np(x, y, float(kappa))


def rowwise_dist(x, y, kappa):
    x, y = _f64(x), _f64(y)
    if _accel.numba_enabled():
        return _rowwise_dist_nb(x, y, float(kappa))
    return _rowwise_dist_np(x, y, float(kappa))


def count_crossings(segments, labels):
    """Count proper intersections between segments carrying different labels.

    ``segments`` is ``(S, 4)`` as ``x0, y0, x1, y1``. Each unordered pair is
    counted once; touching at an endpoint or collinear overlap is not proper.
    """
    segments = _f64(segments).reshape(-1, 4)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if _accel.numba_enabled():
        return int(_count_crossings_nb(segments, labels))
    return _count_crossings_np(segments, labels)


def adamw_update(p, g, m, v, lr, b1, b2, c1, c2, eps, wd):
    """One in-place AdamW update of ``p`` with moment buffers ``m`` and ``v``.

    ``c1`` and ``c2`` are the bias corrections ``1 - beta**t``. All arrays
    must be contiguous float64 of one shape.
    """
    if _accel.numba_enabled():
        _adamw_nb(p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                  m.reshape(-1), v.reshape(-1), lr, b1, b2, c1, c2, eps, wd)
    else:
        _adamw_np(p, g, m, v, lr, b1, b2, c1, c2, eps, wd)
