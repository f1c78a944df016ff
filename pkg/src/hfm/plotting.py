"""Minimal SVG output for projected trajectories (no plotting library)."""
from xml.sax.saxutils import escape

import numpy as np

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _color(label):
    return PALETTE[int(label) % len(PALETTE)]


def _fmt(v):
    return f"{v:.2f}"


def _panel(title, paths, labels, prototypes, x_off, size, pad):
    pts = [p for p in paths if len(p)]
    if prototypes is not None and len(prototypes):
        pts.append(np.asarray(prototypes))
    allpts = np.vstack(pts) if pts else np.zeros((1, 2))
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    inner = size - 2 * pad

    def xy(p):
        u = (p - lo) / span
        return x_off + pad + u[0] * inner, pad + (1.0 - u[1]) * inner + 20

    out = [f'<text x="{_fmt(x_off + size / 2)}" y="16" text-anchor="middle" font-size="14">{escape(title)}</text>']
    out.append(f'<rect x="{_fmt(x_off + 2)}" y="22" width="{size - 4}" height="{size - 4}" fill="none" stroke="#ccc"/>')
    for path, y in zip(paths, labels):
        if len(path) < 2:
            continue
        coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in (xy(p) for p in path))
        out.append(f'<polyline points="{coords}" fill="none" stroke="{_color(y)}" stroke-width="1" stroke-opacity="0.7"/>')
        sx, sy = xy(path[0])
        out.append(f'<circle cx="{_fmt(sx)}" cy="{_fmt(sy)}" r="1.5" fill="{_color(y)}"/>')
    if prototypes is not None:
        for c, p in enumerate(prototypes):
            px, py = xy(p)
            out.append(
                f'<rect x="{_fmt(px - 4)}" y="{_fmt(py - 4)}" width="8" height="8" '
                f'fill="{_color(c)}" stroke="black"/>'
            )
    return out


def trajectories_svg(panels, size=420, pad=20):
    """Side-by-side panels; each is ``(title, paths, labels, prototypes_2d)``.

    ``paths`` are ``(T_i, 2)`` arrays; prototypes are drawn as squares in the
    color of their class.
    """
    width = size * len(panels)
    height = size + 24
    body = []
    for i, (title, paths, labels, protos) in enumerate(panels):
        body += _panel(title, paths, labels, protos, i * size, size, pad)
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>'] + body + ["</svg>"]) + "\n"


def write_svg(path, panels, **kw):
    with open(path, "w") as fh:
        fh.write(trajectories_svg(panels, **kw))
