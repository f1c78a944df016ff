"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs once per path before timing so numba compilation is not
counted. Reported times are the best of ``--repeat`` runs; the last column is
the maximum row-relative difference between the two paths.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from hfm import _accel, _kernels


def _hyperboloid(rng, n, d, kappa, scale=1.0):
    space = scale * rng.standard_normal((n, d))
    return np.hstack([np.sqrt(1.0 / kappa + (space**2).sum(axis=1, keepdims=True)), space])


def _tangent(rng, base, kappa):
    a = rng.standard_normal(base.shape)
    inner = -base[:, :1] * a[:, :1] + (base[:, 1:] * a[:, 1:]).sum(axis=1, keepdims=True)
    return a + kappa * inner * base


def _cases(rng):
    kappa = 1.3
    x = _hyperboloid(rng, 2000, 32, kappa)
    y = _hyperboloid(rng, 64, 32, kappa)
    base = _hyperboloid(rng, 20000, 32, kappa)
    v = _tangent(rng, base, kappa)
    far = _kernels.exp_map_rows(base, v, kappa)
    segs = rng.standard_normal((1500, 4))
    labels = rng.integers(0, 8, 1500)
    n_params = 200_000
    g = rng.standard_normal(n_params)

    def adamw():
        p, m, s = np.ones(n_params), np.zeros(n_params), np.zeros(n_params)
        for t in range(1, 11):
            _kernels.adamw_update(p, g, m, s, 1e-3, 0.9, 0.999, 1 - 0.9**t, 1 - 0.999**t, 1e-8, 1e-4)
        return p

    return {
        "pairwise_dist 2000x64 d=33": lambda: _kernels.pairwise_dist(x, y, kappa),
        "rowwise_dist 20000 d=33": lambda: _kernels.rowwise_dist(base, far, kappa),
        "exp_map 20000 d=33": lambda: _kernels.exp_map_rows(base, v, kappa),
        "log_map 20000 d=33": lambda: _kernels.log_map_rows(base, far, kappa),
        "count_crossings 1500 segments": lambda: np.array([_kernels.count_crossings(segs, labels)], dtype=float),
        "adamw 10 steps, 200k params": adamw,
    }


def _best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _diff(a, b):
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    scale = np.maximum(np.abs(a).max(axis=-1, keepdims=True), 1e-300)
    return float(np.max(np.abs(a - b) / scale))


def run(repeat=5, seed=0):
    cases = _cases(np.random.default_rng(seed))
    rows = []
    for name, fn in cases.items():
        with _accel.use_numba(True):
            t_nb = _best(fn, repeat)
            out_nb = fn()
        with _accel.use_numba(False):
            t_np = _best(fn, repeat)
            out_np = fn()
        rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np,
                     "speedup": t_np / t_nb, "max_rel_diff": _diff(out_nb, out_np)})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not importable; nothing to compare", file=sys.stderr)
        return 1
    rows = run(args.repeat, args.seed)
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for r in rows:
        print(f"{r['kernel']:34s} {1e3 * r['numba_s']:10.3f} {1e3 * r['numpy_s']:10.3f} "
              f"{r['speedup']:8.2f} {r['max_rel_diff']:10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
