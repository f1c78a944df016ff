import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfm import alignment, autodiff as ad, data, lorentz, lorentz_ad as lad
from hfm.alignment import AlignmentConfig
from hfm.errors import DegenerateInputError, InvalidArgumentError, TrainingFailure
from hfm.prototypes import PrototypeSet

from helpers import mp_dist, point_at, random_point, random_points


def radial(r, kappa=1.0, direction=(1.0, 0.0)):
    return point_at(direction, r, kappa)


def with_space_norm(norm, kappa=1.0):
    x = np.zeros(3)
    x[1] = norm
    return lorentz.reproject_to_manifold(x, kappa)


@pytest.fixture(scope="module")
def separated():
    return data.generate_synthetic(data.SyntheticConfig(overlap=0.0, sigma=0.1))


# ------------------------------------------------------------ cone aperture

def test_aperture_clamps_to_right_angle():
    assert alignment.cone_aperture(with_space_norm(0.2), 0.1) == pytest.approx(math.pi / 2, abs=1e-12)


def test_aperture_pi_over_six():
    assert abs(alignment.cone_aperture(with_space_norm(0.4), 0.1) - math.pi / 6) < 1e-12


def test_aperture_narrows_with_radius():
    assert alignment.cone_aperture(with_space_norm(1.0), 0.1) < alignment.cone_aperture(with_space_norm(0.5), 0.1)


def test_aperture_degenerate_at_origin():
    with pytest.raises(DegenerateInputError):
        alignment.cone_aperture(lorentz.origin(2), 0.1)


# ------------------------------------------------------------ exterior angle

def law_of_cosines_exterior(x1, x0, kappa):
    """``pi`` minus the angle at ``x1`` of the triangle (origin, x1, x0), from side lengths."""
    sk = mp.sqrt(mp.mpf(kappa))
    o = lorentz.origin(len(x1) - 1, kappa)
    a, b, c = (mp_dist(x1, o, kappa) * sk, mp_dist(x1, x0, kappa) * sk, mp_dist(o, x0, kappa) * sk)
    cos_g = (mp.cosh(a) * mp.cosh(b) - mp.cosh(c)) / (mp.sinh(a) * mp.sinh(b))
    return float(mp.pi - mp.acos(max(-1, min(1, cos_g))))


def test_exterior_radially_beyond_is_zero():
    assert alignment.exterior_angle(radial(1.0), radial(2.0), 1.0) == pytest.approx(0.0, abs=1e-6)


def test_exterior_radially_between_is_pi():
    assert alignment.exterior_angle(radial(2.0), radial(0.5), 1.0) == pytest.approx(math.pi, abs=1e-6)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 2.0]))
def test_exterior_matches_law_of_cosines(seed, kappa):
    rng = np.random.default_rng(seed)
    x1 = point_at(rng.standard_normal(3), rng.uniform(0.3, 2.5), kappa)
    x0 = point_at(rng.standard_normal(3), rng.uniform(0.3, 2.5), kappa)
    got = alignment.exterior_angle(x1, x0, kappa)
    assert got == pytest.approx(law_of_cosines_exterior(x1, x0, kappa), abs=1e-6)


def test_exterior_degenerate():
    x = radial(1.0)
    with pytest.raises(DegenerateInputError):
        alignment.exterior_angle(x, x, 1.0)
    with pytest.raises(DegenerateInputError):
        alignment.exterior_angle(lorentz.origin(2), x, 1.0)


# ------------------------------------------------------------ entailment

def test_entailment_inside_cone_is_zero():
    assert alignment.entailment_loss(radial(2.0), radial(1.0), 0.1, 1.0) == pytest.approx(0.0, abs=1e-6)


def test_entailment_full_violation():
    x1 = with_space_norm(0.4)
    x0 = lorentz.reproject_to_manifold(np.array([0.0, 0.1, 0.0]), 1.0)
    assert alignment.entailment_loss(x0, x1, 0.1, 1.0) == pytest.approx(5 * math.pi / 6, abs=1e-6)


def test_entailment_hinge_for_in_cone_points(rng):
    for _ in range(20):
        x1 = point_at(rng.standard_normal(2), rng.uniform(0.5, 2.0), 1.0)
        direction = x1[1:] / np.linalg.norm(x1[1:])
        r1 = lorentz.geodesic_distance(lorentz.origin(2), x1, 1.0)
        x0 = point_at(direction, r1 + rng.uniform(0.1, 2.0), 1.0)
        assert alignment.entailment_loss(x0, x1, 0.1, 1.0) < 1e-6


def test_entailment_gradient_matches_fd(rng):
    kappa = 1.0
    x1 = point_at([1.0, 0.3, -0.2], 1.5, kappa)
    checked = 0
    while checked < 5:
        s0 = point_at(rng.standard_normal(3), rng.uniform(0.5, 2.5), kappa)[1:]

        def loss(space):
            return lad.entailment_loss(lad.reproject(ad.as_tensor(space), kappa), x1, 0.1, kappa)

        if loss(s0).item() < 1e-3:  # stay away from the hinge
            continue
        t = ad.Tensor(s0.copy(), requires_grad=True)
        loss(t).backward()
        h = 1e-5
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            num = (loss(s0 + e).item() - loss(s0 - e).item()) / (2 * h)
            assert abs(t.grad[i] - num) <= 1e-4 * max(abs(num), 1e-3)
        checked += 1


# ------------------------------------------------------------ contrastive

def test_contrastive_single_class_is_zero(rng):
    x = random_point(rng, 3, 1.0)
    assert alignment.hyperbolic_contrastive_loss(x, random_points(rng, 1, 3, 1.0), 0, 0.1, 1.0) == 0.0


def test_contrastive_equidistant_is_log_n():
    protos = np.array([radial(1.0, direction=d) for d in ([1, 0], [0, 1], [-1, 0], [0, -1])])
    loss = alignment.hyperbolic_contrastive_loss(lorentz.origin(2), protos, 2, 0.3, 1.0)
    assert loss == pytest.approx(math.log(4), abs=1e-12)


def test_contrastive_closed_form():
    protos = np.array([radial(1.0), radial(2.0, direction=(0.0, 1.0))])
    ref = float(mp.log(1 + mp.e ** -1))
    assert ref == pytest.approx(0.313262, abs=1e-6)
    loss = alignment.hyperbolic_contrastive_loss(lorentz.origin(2), protos, 0, 1.0, 1.0)
    assert abs(loss - ref) < 1e-12


def test_contrastive_empty_raises():
    with pytest.raises(InvalidArgumentError):
        alignment.hyperbolic_contrastive_loss(lorentz.origin(2), np.zeros((0, 3)), 0, 0.1, 1.0)


@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.floats(0.05, 2.0))
def test_contrastive_bounds_and_permutation(seed, N, tau):
    rng = np.random.default_rng(seed)
    protos = random_points(rng, N, 3, 1.0)
    x = random_points(rng, 5, 3, 1.0)
    labels = rng.integers(0, N, 5)
    loss = alignment.hyperbolic_contrastive_loss(x, protos, labels, tau, 1.0)
    d = lorentz.pairwise_distance(x, protos, 1.0)
    assert np.all(loss >= 0)
    assert np.all(loss <= math.log(N) + (d.max(axis=1) - d.min(axis=1)) / tau + 1e-9)
    perm = rng.permutation(N)
    inv = np.argsort(perm)
    permuted = alignment.hyperbolic_contrastive_loss(x, protos[perm], inv[labels], tau, 1.0)
    assert np.allclose(loss, permuted, rtol=1e-12, atol=1e-12)


def test_contrastive_accepts_prototype_set(rng):
    pts = random_points(rng, 3, 2, 2.0)
    x = random_point(rng, 2, 2.0)
    a = alignment.hyperbolic_contrastive_loss(x, PrototypeSet(pts, 2.0), 1, 0.1)
    assert a == alignment.hyperbolic_contrastive_loss(x, pts, 1, 0.1, 2.0)


# ------------------------------------------------------------ optimisation

def test_entailment_drops_on_separated_clusters(separated):
    emb = alignment.run_alignment(separated.features, separated.labels, separated.prototypes, AlignmentConfig())
    first, last = emb.history[0]["entailment"], emb.history[-1]["entailment"]
    assert len(emb.history) == 51
    assert last < 0.1 * first


def test_beta_zero_objective_is_contrastive(separated):
    emb = alignment.run_alignment(
        separated.features[::4], separated.labels[::4], separated.prototypes, AlignmentConfig(beta=0.0, epochs=5)
    )
    for rec in emb.history:
        assert rec["objective"] == rec["contrastive"]


def test_initial_scales_ratio(separated):
    emb = alignment.run_alignment(separated.features, separated.labels, separated.prototypes, AlignmentConfig(epochs=0))
    assert emb.scales.alpha_txt == pytest.approx(0.5 * emb.scales.alpha_img, rel=1e-15)
    cfg = AlignmentConfig(alpha_img=2.0, epochs=0)
    emb = alignment.run_alignment(separated.features, separated.labels, separated.prototypes, cfg)
    assert (emb.scales.alpha_img, emb.scales.alpha_txt) == pytest.approx((2.0, 1.0), rel=1e-15)


def test_texts_start_nearer_origin():
    ds = data.generate_synthetic()
    emb = alignment.run_alignment(ds.features, ds.labels, ds.prototypes, AlignmentConfig(epochs=0))
    o = lorentz.origin(ds.dim, emb.kappa)
    d_txt = lorentz.geodesic_distance(emb.prototype_set.points, o, emb.kappa).mean()
    d_img = lorentz.geodesic_distance(emb.image_points, o, emb.kappa).mean()
    assert d_txt < d_img


def test_alignment_deterministic_and_on_manifold(separated):
    cfg = AlignmentConfig(epochs=3, seed=7)
    a = alignment.run_alignment(separated.features, separated.labels, separated.prototypes, cfg)
    b = alignment.run_alignment(separated.features, separated.labels, separated.prototypes, cfg)
    assert np.array_equal(a.projection, b.projection) and a.kappa == b.kappa
    assert a.kappa > 0
    for pts in (a.image_points, a.prototype_set.points):
        assert np.all(lorentz.manifold_residual(pts, a.kappa) < 1e-9 * np.maximum(1, pts[:, 0] ** 2))


def test_fixed_kappa(separated):
    cfg = AlignmentConfig(epochs=2, learn_kappa=False, kappa=2.0)
    emb = alignment.run_alignment(separated.features[::5], separated.labels[::5], separated.prototypes, cfg)
    assert emb.kappa == 2.0


def test_objective_gradient_matches_fd(separated, rng):
    cfg = AlignmentConfig()
    feats, labels = separated.features[::10], separated.labels[::10]
    params = alignment._initial_params(separated.dim, cfg, alignment.initial_alpha_img(feats, cfg))
    params["projection"] = params["projection"] + 0.05 * rng.standard_normal(params["projection"].shape)

    def value(p):
        return alignment.alignment_objective(alignment._param_tensors(p), feats, labels, separated.prototypes, cfg)[0]

    tensors = alignment._param_tensors(params)
    alignment.alignment_objective(tensors, feats, labels, separated.prototypes, cfg)[0].backward()
    h = 1e-5
    probes = [("log_kappa", ()), ("log_alpha_txt", ()), ("log_alpha_img", ())]
    probes += [("projection", tuple(rng.integers(0, separated.dim, 2))) for _ in range(10)]
    for name, idx in probes:
        plus = {k: v.copy() for k, v in params.items()}
        minus = {k: v.copy() for k, v in params.items()}
        plus[name][idx] += h
        minus[name][idx] -= h
        num = (value(plus).item() - value(minus).item()) / (2 * h)
        got = tensors[name].grad[idx]
        assert abs(got - num) <= 1e-4 * max(abs(num), 1e-4), name


def test_divergence_raises_with_epoch(separated, monkeypatch):
    real = alignment.alignment_objective

    def broken(*args):
        total, con, ent = real(*args)
        return total * np.nan, con, ent

    monkeypatch.setattr(alignment, "alignment_objective", broken)
    with pytest.raises(TrainingFailure) as info:
        alignment.run_alignment(separated.features, separated.labels, separated.prototypes, AlignmentConfig(epochs=2))
    assert info.value.index == 1


def test_zero_features_are_degenerate():
    with pytest.raises(DegenerateInputError):
        alignment.run_alignment(np.zeros((4, 2)), np.array([0, 0, 1, 1]), np.eye(2), AlignmentConfig(epochs=1))


@pytest.mark.parametrize("kw", [{"H": 0.0}, {"tau": -1.0}, {"beta": -0.1}, {"alpha_img": 0.0}])
def test_config_validation(kw):
    with pytest.raises(InvalidArgumentError):
        AlignmentConfig(**kw)


def test_embedding_roundtrip(tmp_path, separated):
    emb = alignment.run_alignment(separated.features[::5], separated.labels[::5], separated.prototypes,
                                  AlignmentConfig(epochs=1))
    path = tmp_path / "emb.npz"
    alignment.save_embedding(path, emb)
    back = alignment.load_embedding(path)
    assert np.array_equal(back.image_points, emb.image_points)
    assert np.array_equal(back.prototype_set.points, emb.prototype_set.points)
    assert back.kappa == emb.kappa and back.scales == emb.scales
    assert np.array_equal(back.embed_images(separated.features[:3]), emb.embed_images(separated.features[:3]))
