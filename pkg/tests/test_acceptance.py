"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python
tests/test_acceptance.py``). The end-to-end benchmark and the determinism
check each run the default experiment, about a minute apiece.
"""
import math
import sys
import time

import mpmath as mp
import numpy as np
import pytest

from hfm import alignment, data, inference, lorentz, training
from hfm.config import ExperimentConfig
from hfm.experiment import metrics_json, run_experiment
from hfm.velocity import VelocityNetParams

from helpers import fd_gradient_errors, point_at, random_points, random_tangent, residual, sample_param_indices

KAPPAS = (0.5, 1.0, 2.0)


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return emit


def bounded_field(io, seed):
    net = VelocityNetParams.init(io, 32, 2, seed=seed, zero_final=False)

    def field(x, t):
        x = np.atleast_2d(x)
        return np.tanh(net(x, t)) / x[:, :1]

    return field


# ------------------------------------------------------------ geometry

def test_manifold_invariant_suite(report):
    rng = np.random.default_rng(0)
    n, total, worst = 4, 10_000, 0.0
    fields = {k: bounded_field(n + 1, i) for i, k in enumerate(KAPPAS)}
    start = time.perf_counter()
    done = 0
    while done < total:
        kappa = KAPPAS[done % 3]
        o = lorentz.origin(n, kappa)
        x = lorentz.exp_map(o, lorentz.lift_to_tangent_at_origin(rng.standard_normal(n)), kappa)
        for _ in range(50):
            op = rng.integers(0, 5)
            if op == 0:  # lift a fresh feature and move along it from the origin
                y = lorentz.exp_map(o, lorentz.lift_to_tangent_at_origin(rng.standard_normal(n), rng.uniform(0.1, 1)), kappa)
                x = lorentz.geodesic_interpolate(x, y, rng.random(), kappa)
            elif op == 1:
                x = lorentz.exp_map(x, random_tangent(rng, x, kappa, rng.uniform(0, 1.5)), kappa)
            elif op == 2:
                y = point_at(rng.standard_normal(n), rng.uniform(0, 3), kappa)
                x = lorentz.exp_map(x, 0.5 * lorentz.log_map(x, y, kappa), kappa)
            elif op == 3:
                y = point_at(rng.standard_normal(n), rng.uniform(0, 3), kappa)
                x = lorentz.geodesic_interpolate(x, y, rng.random(), kappa)
            else:
                x = inference.euler_step(fields[kappa], x, rng.random() * 0.9, 0.1, kappa)[0]
            if lorentz.geodesic_distance(o, x, kappa) > 5.0:
                x = lorentz.geodesic_interpolate(x, o, 0.5, kappa)
            worst = max(worst, float(residual(x, kappa)[0]))
            done += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and elapsed < 5.0
    report("manifold invariant", ok, f"{done} compositions, max residual {worst:.2e} (< 1e-9), {elapsed:.2f} s (< 5 s)")


def test_exp_log_inversion(report):
    rng = np.random.default_rng(1)
    n, m = 5, 1000
    kappa = np.repeat(KAPPAS, m // 3 + 1)[:m]
    base = np.array([point_at(rng.standard_normal(n), rng.uniform(0, 3), k) for k in kappa])
    norms = rng.uniform(0, 5, m)
    v = np.array([random_tangent(rng, b, k, r) for b, k, r in zip(base, kappa, norms)])
    start = time.perf_counter()
    rt, dist = 0.0, 0.0
    for k in KAPPAS:
        sel = kappa == k
        x = lorentz.exp_map(base[sel], v[sel], k)
        back = lorentz.log_map(base[sel], x, k)
        rt = max(rt, float(np.abs(back - v[sel]).max()))
        dist = max(dist, float(np.abs(lorentz.geodesic_distance(base[sel], x, k) - norms[sel]).max()))
    elapsed = time.perf_counter() - start
    ok = rt < 1e-8 and dist < 1e-8 and elapsed < 1.0
    report("exp/log inversion", ok,
           f"{m} cases, roundtrip {rt:.2e}, distance {dist:.2e} (< 1e-8), {elapsed:.3f} s (< 1 s)")


# ------------------------------------------------------------ training objective

def test_gradient_oracle(report):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    ds = data.generate_synthetic()
    emb = alignment.run_alignment(ds.features, ds.labels, ds.prototypes, alignment.AlignmentConfig(epochs=0))
    params = VelocityNetParams.init(ds.dim + 1, 256, 3, seed=2, zero_final=False, time_head=True)
    idx = rng.integers(0, len(ds), 32)
    t = rng.random(32)
    kappa = emb.kappa
    x_t, x_next = training.sample_pair_states(emb.image_points[idx], emb.prototype_set.points[ds.labels[idx]], t, 0.1, kappa)
    args = (x_t, t, x_next, ds.labels[idx], emb.prototype_set.points, 0.1, kappa, 0.1, 0.1)
    _, _, _, grads = training.composite_loss(params, *args)

    def loss(p):
        return training.composite_loss(p, *args, need_grad=False)[0]

    probes = sample_param_indices(params, 40, rng)
    errs = fd_gradient_errors(params, loss, grads, probes, h=1e-4)
    elapsed = time.perf_counter() - start
    ok = len(probes) >= 32 and errs.max() < 1e-4 and elapsed < 10.0
    report("gradient oracle", ok,
           f"{len(probes)} params, max rel err {errs.max():.2e} (< 1e-4), {elapsed:.2f} s (< 10 s)")


def test_self_consistent_supervision(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for kappa in KAPPAS:
        for _ in range(5):
            x0, x1 = random_points(rng, 64, 8, kappa, 3.0), random_points(rng, 64, 8, kappa, 3.0)
            t = rng.random(64)
            x_t, x_next = training.sample_pair_states(x0, x1, t, 0.1, kappa)

            def oracle(x, _t):
                return lorentz.log_map(x, x_next, kappa) / 0.1

            pred = training.predicted_next_state(oracle, x_t, t, 0.1, kappa)
            worst = max(worst, float(training.step_loss(pred, x_next, kappa).mean()))
    report("oracle supervision", worst < 1e-10, f"max batch L_step {worst:.2e} (< 1e-10)")


def test_closed_forms(report):
    d_txt = 1.2345
    phi = inference.stopping_threshold(10, d_txt)
    x1 = lorentz.reproject_to_manifold(np.array([0.0, 0.4, 0.0]), 1.0)
    ap = float(alignment.cone_aperture(x1, 0.1))
    protos = np.array([point_at([1, 0], 1.0, 1.0), point_at([0, 1], 2.0, 1.0)])
    con = alignment.hyperbolic_contrastive_loss(lorentz.origin(2), protos, 0, 1.0, 1.0)
    ref = float(mp.log(1 + mp.e ** -1))
    ok = phi == 0.5 * d_txt and abs(ap - math.pi / 6) < 1e-12 and abs(con - ref) < 1e-12
    report("closed forms", ok,
           f"phi(10)*d = {phi!r} vs {0.5 * d_txt!r}; aperture err {abs(ap - math.pi / 6):.1e}; "
           f"contrastive err {abs(con - ref):.1e}")


# ------------------------------------------------------------ end to end

@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("e2e")
    cfg = ExperimentConfig(out_dir=str(out))
    start = time.perf_counter()
    res = run_experiment(cfg)
    return res, time.perf_counter() - start, (out / "metrics.json").read_bytes()


def test_end_to_end_benchmark(report, default_run):
    res, elapsed, _ = default_run
    m = res.metrics
    b = m["baseline"]
    cfg = ExperimentConfig()
    setup = (cfg.n_classes, cfg.dim, cfg.k_shot, cfg.overlap, cfg.seed) == (8, 16, 4, 1.0, 0)
    checks = [
        m["accuracy"] >= m["nearest_prototype_accuracy"],
        m["corridor_violation_rate"] < b["corridor_violation_rate"],
        m["threshold_hit_rate"] >= 0.9,
        elapsed < 120.0,
        setup,
    ]
    report("end-to-end benchmark", all(checks),
           f"accuracy {m['accuracy']:.4f} vs nearest-prototype {m['nearest_prototype_accuracy']:.4f}; "
           f"violation {m['corridor_violation_rate']:.4f} vs baseline {b['corridor_violation_rate']:.4f}; "
           f"threshold-hit {m['threshold_hit_rate']:.3f} (>= 0.9); {elapsed:.1f} s (< 120 s)")


def test_determinism(report, default_run, tmp_path):
    _, _, first = default_run
    res = run_experiment(ExperimentConfig(out_dir=str(tmp_path)))
    second = (tmp_path / "metrics.json").read_bytes()
    ok = first == second and metrics_json(res.metrics).encode() == second
    report("determinism", ok, f"metrics.json {len(first)} bytes, identical={first == second}")


def test_single_class_stopping(report):
    ds = data.generate_synthetic(data.SyntheticConfig(n_classes=1))
    support, test = data.split_k_shot(ds, 4, 0)
    emb = alignment.run_alignment(support.features, support.labels, ds.prototypes)
    protos = emb.prototype_set
    threshold = inference.stopping_threshold(len(protos), protos.diameter)
    x0 = emb.embed_images(test.features)
    horizon = inference.n_steps(0.1)
    ok = threshold == 0.0
    for field in (VelocityNetParams.init(ds.dim + 1, 256, 3, time_head=True), bounded_field(ds.dim + 1, 7)):
        pr = inference.predict(field, x0, protos, 0.1)
        ok &= all(r == inference.HORIZON for r in pr.stop_reasons)
        ok &= all(len(tr) == horizon + 1 for tr in pr.trajectories)
    report("single-class stopping", ok, f"threshold {threshold}, {len(x0)} trajectories x 2 fields all at horizon")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
