"""Independent reference implementations and random-input builders for tests.

The mpmath oracles use the textbook arcosh/cosh formulas at 50 digits and
share no code with the package.
"""
import math

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def mp_vec(a):
    return [mp.mpf(float(v)) for v in np.asarray(a, dtype=np.float64).ravel()]


def mp_inner(x, y):
    x, y = mp_vec(x), mp_vec(y)
    return -x[0] * y[0] + mp.fsum(a * b for a, b in zip(x[1:], y[1:]))


def mp_dist(x, y, kappa):
    k = mp.mpf(kappa)
    arg = -k * mp_inner(x, y)
    return mp.acosh(max(arg, mp.mpf(1))) / mp.sqrt(k)


def mp_exp(base, v, kappa):
    k = mp.mpf(kappa)
    b, w = mp_vec(base), mp_vec(v)
    u = mp.sqrt(k * max(mp_inner(v, v), mp.mpf(0)))
    c = mp.cosh(u)
    s = mp.sinh(u) / u if u != 0 else mp.mpf(1)
    return np.array([float(c * bi + s * wi) for bi, wi in zip(b, w)])


def mp_log(base, x, kappa):
    """``d(base, x) * P(x) / |P(x)|_L`` with ``P`` the tangent projection."""
    k = mp.mpf(kappa)
    b, xx = mp_vec(base), mp_vec(x)
    ip = mp_inner(base, x)
    proj = [xi + k * ip * bi for xi, bi in zip(xx, b)]
    pn2 = -proj[0] ** 2 + mp.fsum(p * p for p in proj[1:])
    if pn2 <= 0:
        return np.zeros(len(b))
    d = mp_dist(base, x, kappa)
    return np.array([float(d * p / mp.sqrt(pn2)) for p in proj])


def point_at(direction, r, kappa):
    """Point at geodesic distance ``r`` from the origin along unit ``direction``."""
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    sk = math.sqrt(kappa)
    x = np.empty(direction.size + 1)
    x[0] = math.cosh(sk * r) / sk
    x[1:] = math.sinh(sk * r) / sk * direction
    return x


def random_point(rng, n, kappa, max_r=3.0):
    return point_at(rng.standard_normal(n), rng.uniform(0.0, max_r), kappa)


def random_points(rng, m, n, kappa, max_r=3.0):
    return np.array([random_point(rng, n, kappa, max_r) for _ in range(m)])


def random_tangent(rng, base, kappa, norm):
    """Tangent vector at ``base`` with Lorentz norm ``norm``."""
    a = rng.standard_normal(base.shape[-1])
    ip = -base[0] * a[0] + base[1:] @ a[1:]
    v = a + kappa * ip * base
    vn = math.sqrt(max(-v[0] ** 2 + v[1:] @ v[1:], 1e-300))
    return v * (norm / vn)


def residual(x, kappa):
    x = np.atleast_2d(x)
    return np.abs(-x[:, 0] ** 2 + np.einsum("ij,ij->i", x[:, 1:], x[:, 1:]) + 1.0 / kappa)


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def sample_param_indices(params, count, rng):
    """``count`` (name, index) probes spread round-robin over every tensor."""
    names = sorted(params.tensors)
    probes = []
    for k in range(count):
        name = names[k % len(names)]
        shape = params.tensors[name].shape
        probes.append((name, tuple(int(rng.integers(0, s)) for s in shape)))
    return probes


def fd_gradient_errors(params, loss, grads, probes, h=1e-4):
    """Relative errors ``|g - fd| / max(|g|, |fd|)`` of central differences at each probe.

    Probes where both values are below 1e-10 count as exact agreement.
    """
    errs = []
    for name, idx in probes:
        arr = params.tensors[name]
        keep = arr[idx]
        arr[idx] = keep + h
        up = loss(params)
        arr[idx] = keep - h
        down = loss(params)
        arr[idx] = keep
        num = (up - down) / (2 * h)
        got = grads[name][idx]
        scale = max(abs(got), abs(num))
        errs.append(0.0 if scale < 1e-10 else abs(got - num) / scale)
    return np.array(errs)
