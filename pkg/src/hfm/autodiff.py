"""A small reverse-mode differentiation tape over numpy arrays.

Only what the alignment and flow objectives need is here: broadcasting
arithmetic, matmul, reductions, slicing, a handful of elementwise functions,
and fused special functions of a squared norm that stay smooth where the
naive composition (through ``sqrt``) would not.

    >>> x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    >>> y = (x * x).sum()
    >>> y.backward()
    >>> x.grad
    array([2., 4.])
"""
import numpy as np

_SERIES_CUTOFF = 1e-8


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")
    # make ndarray <op> Tensor dispatch to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)

    def __repr__(self):
        return f"Tensor({self.value!r}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.value)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        order, seen = [], set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                cur, done = stack.pop()
                if done:
                    order.append(cur)
                    continue
                if id(cur) in seen or not cur.requires_grad:
                    continue
                seen.add(id(cur))
                stack.append((cur, True))
                for p in cur._parents:
                    stack.append((p, False))

        visit(self)
        grads = {id(self): np.ones_like(self.value) if grad is None else np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.shape)
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        return Tensor(self.value + other.value, parents=(self, other), backward=lambda g: (g, g))

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.value, parents=(self,), backward=lambda g: (-g,))

    def __sub__(self, other):
        other = as_tensor(other)
        return Tensor(self.value - other.value, parents=(self, other), backward=lambda g: (g, -g))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.value, other.value
        return Tensor(a * b, parents=(self, other), backward=lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.value, other.value
        out = a / b
        return Tensor(out, parents=(self, other), backward=lambda g: (g / b, -g * out / b))

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.value, other.value

        def back(g):
            return g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g

        return Tensor(a @ b, parents=(self, other), backward=back)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    def __getitem__(self, index):
        shape = self.shape

        parts = index if isinstance(index, tuple) else (index,)
        fancy = any(isinstance(p, (np.ndarray, list)) for p in parts)

        def back(g):
            full = np.zeros(shape)
            if fancy:
                np.add.at(full, index, g)
            else:
                full[index] = g
            return (full,)

        return Tensor(self.value[index], parents=(self,), backward=back)

    @property
    def T(self):
        return Tensor(self.value.T, parents=(self,), backward=lambda g: (g.T,))

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor(self.value.sum(axis=axis, keepdims=keepdims), parents=(self,), backward=back)

    def mean(self, axis=None, keepdims=False):
        count = self.value.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unary(x, value, dvalue):
    x = as_tensor(x)
    return Tensor(value, parents=(x,), backward=lambda g: (g * dvalue,))


def exp(x):
    v = np.exp(as_tensor(x).value)
    return _unary(x, v, v)


def log(x):
    x = as_tensor(x)
    return _unary(x, np.log(x.value), 1.0 / x.value)


def sqrt(x):
    x = as_tensor(x)
    v = np.sqrt(x.value)
    return _unary(x, v, 0.5 / v)


def square(x):
    x = as_tensor(x)
    return _unary(x, x.value**2, 2.0 * x.value)


def arcsin_clipped(x):
    """``arcsin(clip(x, -1, 1))``; zero gradient where the clip is active."""
    x = as_tensor(x)
    inside = np.abs(x.value) < 1.0
    c = np.clip(x.value, -1.0, 1.0)
    d = np.where(inside, 1.0 / np.sqrt(np.where(inside, 1.0 - c * c, 1.0)), 0.0)
    return _unary(x, np.arcsin(c), d)


def arccos_clipped(x):
    x = as_tensor(x)
    inside = np.abs(x.value) < 1.0
    c = np.clip(x.value, -1.0, 1.0)
    d = np.where(inside, -1.0 / np.sqrt(np.where(inside, 1.0 - c * c, 1.0)), 0.0)
    return _unary(x, np.arccos(c), d)


def relu(x):
    """Hinge ``max(0, x)`` with subgradient 0 at and below the kink."""
    x = as_tensor(x)
    return _unary(x, np.maximum(x.value, 0.0), (x.value > 0.0).astype(np.float64))


def clip_min(x, lo):
    x = as_tensor(x)
    return _unary(x, np.maximum(x.value, lo), (x.value > lo).astype(np.float64))


def logsumexp(x, axis=-1):
    x = as_tensor(x)
    m = x.value.max(axis=axis, keepdims=True)
    e = np.exp(x.value - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    soft = e / s
    return Tensor(out, parents=(x,), backward=lambda g: (np.expand_dims(g, axis) * soft,))


def concat(parts, axis=-1):
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([p.value for p in parts], axis=axis), parents=tuple(parts), backward=back)


def take_rows(x, labels):
    """``x[i, labels[i]]`` for a 2-D tensor."""
    x = as_tensor(x)
    idx = np.arange(x.shape[0])
    shape = x.shape

    def back(g):
        full = np.zeros(shape)
        full[idx, labels] = g
        return (full,)

    return Tensor(x.value[idx, labels], parents=(x,), backward=back)


# fused functions of a squared norm s >= 0 -------------------------------------


def cosh_sqrt(s):
    """``cosh(sqrt(s))``, analytic in ``s`` (derivative 1/2 at 0)."""
    s = as_tensor(s)
    r = np.sqrt(np.maximum(s.value, 0.0))
    return _unary(s, np.cosh(r), 0.5 * _sinhc(r))


def sinhc_sqrt(s):
    """``sinh(sqrt(s)) / sqrt(s)``, analytic in ``s`` (value 1, slope 1/6 at 0)."""
    s = as_tensor(s)
    sv = np.maximum(s.value, 0.0)
    r = np.sqrt(sv)
    val = _sinhc(r)
    small = sv < 1e-4
    safe = np.where(small, 1.0, sv)
    d = np.where(small, 1.0 / 6.0 + sv / 60.0 + sv * sv / 1680.0, (np.cosh(r) - val) / (2.0 * safe))
    return _unary(s, val, d)


def asinh_sqrt(s):
    """``asinh(sqrt(s))``; gradient taken as 0 at ``s == 0`` (coincident points)."""
    s = as_tensor(s)
    sv = np.maximum(s.value, 0.0)
    r = np.sqrt(sv)
    pos = sv > 0.0
    d = np.where(pos, 0.5 / np.where(pos, r * np.sqrt(1.0 + sv), 1.0), 0.0)
    return _unary(s, np.arcsinh(r), d)


def asinh_sqrt_sq(s):
    """``asinh(sqrt(s))**2``, analytic in ``s`` (derivative 1 at 0)."""
    s = as_tensor(s)
    sv = np.maximum(s.value, 0.0)
    r = np.sqrt(sv)
    a = np.arcsinh(r)
    small = sv < _SERIES_CUTOFF
    safe = np.where(small, 1.0, r * np.sqrt(1.0 + sv))
    d = np.where(small, 1.0 - 2.0 * sv / 3.0, a / safe)
    return _unary(s, a * a, d)


def _sinhc(r):
    out = np.ones_like(r)
    big = r >= 1e-12
    out[big] = np.sinh(r[big]) / r[big]
    return out
