"""Velocity network: a residual MLP with sinusoidal time conditioning.

Layout (row vectors, ``h = x @ W + b``)::

    e   = embed(t)                                   # (B, 64)
    h   = x @ in.W + in.b                            # (B, width)
    for each block k:
        a = h @ block{k}.W1 + block{k}.b1 + e @ block{k}.Wt
        h = h + silu(a) @ block{k}.W2 + block{k}.b2
    out = h @ out.W + out.b                          # (B, io_dim)

``out.W`` and ``out.b`` start at zero, so an untrained field is the zero
velocity. With ``time_head`` set (the hyperbolic field) the output is divided
by the input's time coordinate ``x[0]``. Projected onto the tangent space an
ambient vector ``a`` gains a factor of order ``sqrt(kappa) * x[0]``, so
without the division a bounded network output becomes a velocity growing
exponentially with distance from the origin, and Euler transport of any
point that strays outward diverges. Gradients are hand-derived
(:func:`backward`).

Checkpoint format ("HFMP", little-endian): magic, then u32 version, layer
count, width, io_dim and a flags word (bit 0: ``time_head``), then every tensor of :func:`param_names` in that
order as row-major IEEE-754 binary64.
"""
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FeatureFormatError, InvalidArgumentError

EMBED_DIM = 64
TIME_SCALE = 100.0
MAGIC = b"HFMP"
VERSION = 1


def param_names(n_layers):
    names = ["in.W", "in.b"]
    for k in range(n_layers):
        names += [f"block{k}.Wt", f"block{k}.W1", f"block{k}.b1", f"block{k}.W2", f"block{k}.b2"]
    return names + ["out.W", "out.b"]


def param_shapes(io_dim, width, n_layers):
    shapes = {"in.W": (io_dim, width), "in.b": (width,), "out.W": (width, io_dim), "out.b": (io_dim,)}
    for k in range(n_layers):
        shapes[f"block{k}.Wt"] = (EMBED_DIM, width)
        shapes[f"block{k}.W1"] = (width, width)
        shapes[f"block{k}.b1"] = (width,)
        shapes[f"block{k}.W2"] = (width, width)
        shapes[f"block{k}.b2"] = (width,)
    return shapes


@dataclass
class VelocityNetParams:
    io_dim: int
    width: int
    n_layers: int
    tensors: dict = field(repr=False)
    time_head: bool = False

    @classmethod
    def init(cls, io_dim, width=256, n_layers=3, seed=0, zero_final=True, time_head=False):
        rng = np.random.default_rng(seed)
        shapes = param_shapes(io_dim, width, n_layers)
        tensors = {}
        for name in param_names(n_layers):
            shape = shapes[name]
            if len(shape) == 1 or (zero_final and name == "out.W"):
                tensors[name] = np.zeros(shape)
                continue
            std = 1.0 / math.sqrt(shape[0])
            if name.endswith("W2"):
                std /= math.sqrt(n_layers)
            tensors[name] = std * rng.standard_normal(shape)
        return cls(io_dim, width, n_layers, tensors, time_head)

    def __post_init__(self):
        shapes = param_shapes(self.io_dim, self.width, self.n_layers)
        if set(self.tensors) != set(shapes):
            raise InvalidArgumentError("parameter names do not match the architecture")
        for name, shape in shapes.items():
            if self.tensors[name].shape != shape:
                raise InvalidArgumentError(f"{name}: expected shape {shape}, got {self.tensors[name].shape}")

    def __call__(self, x, t):
        return forward(self, x, t)

    @property
    def size(self):
        return sum(a.size for a in self.tensors.values())

    def copy(self):
        tensors = {k: v.copy() for k, v in self.tensors.items()}
        return VelocityNetParams(self.io_dim, self.width, self.n_layers, tensors, self.time_head)


def time_embedding(t, dim=EMBED_DIM):
    """Sinusoidal features of ``t``; every component lies in [-1, 1]."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = TIME_SCALE * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _prepare(params, x, t):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != params.io_dim:
        raise InvalidArgumentError(f"input width {x.shape[1]} != network io_dim {params.io_dim}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    return x, t, single


def _time(x):
    t = x[:, :1]
    if np.any(t <= 0.0):
        raise InvalidArgumentError("time_head needs inputs with positive time coordinate")
    return t


def forward(params, x, t, return_cache=False):
    """Raw ambient output of the network for inputs ``x`` at times ``t``."""
    x, t, single = _prepare(params, x, t)
    p = params.tensors
    e = time_embedding(t)
    h = x @ p["in.W"] + p["in.b"]
    cache = {"x": x, "e": e, "h": [], "a": [], "z": []}
    for k in range(params.n_layers):
        a = h @ p[f"block{k}.W1"] + p[f"block{k}.b1"] + e @ p[f"block{k}.Wt"]
        z = a * _sigmoid(a)
        cache["h"].append(h)
        cache["a"].append(a)
        cache["z"].append(z)
        h = h + z @ p[f"block{k}.W2"] + p[f"block{k}.b2"]
    cache["h"].append(h)
    out = h @ p["out.W"] + p["out.b"]
    if params.time_head:
        out = out / _time(x)
    if single:
        out = out[0]
    return (out, cache) if return_cache else out


def backward(params, x, t, upstream, cache=None):
    """Parameter gradients of ``sum(upstream * forward(params, x, t))``."""
    if cache is None:
        _, cache = forward(params, x, t, return_cache=True)
    p = params.tensors
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if g.shape != (cache["x"].shape[0], params.io_dim):
        raise InvalidArgumentError("upstream gradient shape does not match the output")
    if params.time_head:
        g = g / _time(cache["x"])
    grads = {"out.W": cache["h"][-1].T @ g, "out.b": g.sum(axis=0)}
    gh = g @ p["out.W"].T
    e = cache["e"]
    for k in reversed(range(params.n_layers)):
        a, z, h_in = cache["a"][k], cache["z"][k], cache["h"][k]
        grads[f"block{k}.W2"] = z.T @ gh
        grads[f"block{k}.b2"] = gh.sum(axis=0)
        s = _sigmoid(a)
        ga = (gh @ p[f"block{k}.W2"].T) * (s * (1.0 + a * (1.0 - s)))
        grads[f"block{k}.W1"] = h_in.T @ ga
        grads[f"block{k}.b1"] = ga.sum(axis=0)
        grads[f"block{k}.Wt"] = e.T @ ga
        gh = gh + ga @ p[f"block{k}.W1"].T
    grads["in.W"] = cache["x"].T @ gh
    grads["in.b"] = gh.sum(axis=0)
    return grads


def hidden_stream(params, x, t):
    """Hidden state entering the output layer (architecture diagnostics)."""
    _, cache = forward(params, x, t, return_cache=True)
    return cache["h"][-1]


# ----------------------------------------------------------------- checkpoint


def save_checkpoint(path, params):
    with open(path, "wb") as fh:
        header = struct.pack("<IIIII", VERSION, params.n_layers, params.width, params.io_dim, int(params.time_head))
        fh.write(MAGIC + header)
        for name in param_names(params.n_layers):
            fh.write(np.ascontiguousarray(params.tensors[name], dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise FeatureFormatError("bad magic, expected b'HFMP'", 0)
    if len(buf) < 24:
        raise FeatureFormatError("truncated header", len(buf))
    version, n_layers, width, io_dim, flags = struct.unpack_from("<IIIII", buf, 4)
    if version != VERSION:
        raise FeatureFormatError(f"unsupported version {version}", 4)
    if flags & ~1:
        raise FeatureFormatError(f"unknown flags {flags:#x}", 20)
    shapes = param_shapes(io_dim, width, n_layers)
    offset = 24
    tensors = {}
    for name in param_names(n_layers):
        count = int(np.prod(shapes[name]))
        if offset + 8 * count > len(buf):
            raise FeatureFormatError(f"truncated tensor {name}", len(buf))
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shapes[name]).copy()
        if not np.all(np.isfinite(arr)):
            raise FeatureFormatError(f"non-finite value in {name}", offset)
        tensors[name] = arr
        offset += 8 * count
    if offset != len(buf):
        raise FeatureFormatError("trailing bytes after last tensor", offset)
    return VelocityNetParams(io_dim, width, n_layers, tensors, bool(flags & 1))
