import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rearrange.evaluation import paired_gap_z, run_see_trials
from rearrange.perception import (
    SIGMA_FLOOR,
    MatchingDistribution,
    NoiseModel,
    Thresholds,
    ViewState,
    classify_goal,
    draw_latent_views,
    entropy,
    expected_entropy_after,
    fuse_views,
    observe_scene,
    quality_posterior,
    sample_view,
    should_terminate,
    to_distribution,
    view_distance,
    view_means,
)
from rearrange.scene import ScenarioParams, generate_scene, random_params
from rearrange.seeding import stream

TH = Thresholds()


def dist(*p):
    return MatchingDistribution(np.array(p, dtype=float))


def test_softmax_examples():
    d = to_distribution(np.zeros(5), 0.1)
    np.testing.assert_allclose(d.probs, 0.2)
    assert d.entropy == pytest.approx(math.log(5))
    np.testing.assert_allclose(to_distribution(np.array([1.0, 0.0]), 1.0).probs, [0.7311, 0.2689], atol=1e-4)
    sharp = to_distribution(np.array([5.0, 0.0, 0.0]), 0.1)
    assert sharp.score == pytest.approx(1.0) and sharp.entropy < 1e-18


def test_entropy_examples():
    assert entropy(dist(1, 0, 0)) == 0.0
    assert entropy(dist(0.5, 0.5, 0, 0)) == pytest.approx(math.log(2))


def test_classify_and_terminate_examples():
    assert classify_goal(dist(0.25, 0.2, 0.2, 0.2, 0.15), 5, TH) == 1
    assert classify_goal(dist(0.2, 0.2, 0.2, 0.2, 0.2), 5, TH) is None
    assert classify_goal(dist(0.24, 0.28, 0.24, 0.24), 4, TH) is None
    assert should_terminate(dist(0.35, 0.2, 0.15, 0.15, 0.15), 5, TH)
    assert not should_terminate(dist(0.25, 0.2, 0.2, 0.2, 0.15), 5, TH)
    assert should_terminate(dist(0, 0, 1), 3, TH)


def test_argmax_ties_go_to_lowest_index():
    assert dist(0.4, 0.4, 0.2).argmax == 1


def test_threshold_validation():
    Thresholds().validate(5)
    with pytest.raises(ValueError):
        Thresholds(omega_m=0.03, omega_g=0.04).validate(5)
    with pytest.raises(ValueError):
        Thresholds().validate(1)
    with pytest.raises(ValueError):
        Thresholds(omega_m=0.6).validate(2)


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseModel(mu_match=0.0, mu_nonmatch=0.0)
    with pytest.raises(ValueError):
        NoiseModel(temperature=0.0)
    with pytest.raises(ValueError):
        NoiseModel(p_bad_scene=1.5)
    with pytest.raises(ValueError):
        NoiseModel(num_views=0)


def scene3():
    return generate_scene(ScenarioParams(3, 1, rng_seed=2))


def test_sample_view_examples():
    spec = scene3()
    noise = NoiseModel.ideal()
    lat = draw_latent_views(noise, spec, 0)
    rng = np.random.default_rng(0)
    i = spec.goal_objects[0]
    s = sample_view(noise, spec, i, 1, rng, lat)
    expect = np.zeros(3)
    expect[spec.true_goal[i] - 1] = 1.0
    np.testing.assert_array_equal(s, expect)
    ng = spec.nongoal_objects[0]
    np.testing.assert_array_equal(sample_view(noise, spec, ng, 2, rng, lat), np.zeros(3))
    with pytest.raises(ValueError):
        sample_view(noise, spec, i, 13, rng, lat)


def test_bad_views_point_at_the_confuser():
    spec = scene3()
    i = spec.goal_objects[0]
    other = 1 + spec.true_goal[i] % 3
    noise = NoiseModel(p_bad_view=1.0, confuser={i: other})
    lat = draw_latent_views(noise, spec, 0)
    for v in range(1, 13):
        s = sample_view(noise, spec, i, v, np.random.default_rng(v), lat)
        assert to_distribution(s, 0.1).argmax == other


def test_fusion_examples():
    s1 = np.array([0.0, 1.0, 0.0])
    vs = fuse_views(ViewState(object=1), 3, s1)
    np.testing.assert_array_equal(vs.fused, s1)
    vs2 = fuse_views(vs, 4, s1)
    np.testing.assert_array_equal(vs2.fused, s1)
    noise = NoiseModel(mu_bad=0.3)
    bad = view_means(noise, 3, 2, None, False)
    good = view_means(noise, 3, 2, None, True)
    mixed = fuse_views(fuse_views(ViewState(object=1), 1, bad), 2, good)
    assert mixed.fused[1] == pytest.approx((0.3 + 1.0) / 2)
    latest = fuse_views(fuse_views(ViewState(object=1, mode="latest"), 1, bad), 2, good)
    np.testing.assert_array_equal(latest.fused, good)
    with pytest.raises(ValueError):
        fuse_views(vs, 5, np.zeros(4))
    with pytest.raises(ValueError):
        fuse_views(vs, 3, s1)


def test_view_distance_is_circular():
    assert view_distance(1, 12, 12) == pytest.approx(2 * math.pi / 12)
    assert view_distance(1, 7, 12) == pytest.approx(math.pi)
    assert view_distance(4, 4, 12) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_ideal_scene_view_recovers_assignment(seed):
    spec = generate_scene(random_params(np.random.default_rng(seed), 6))
    noise = NoiseModel.ideal()
    d = observe_scene(noise, spec, spec.initial_state(), stream(seed), draw_latent_views(noise, spec, seed))
    assert {i: classify_goal(x, spec.num_goals, TH) for i, x in d.items()} == dict(spec.true_goal)


vectors = st.integers(2, 12).flatmap(
    lambda n: arrays(np.float64, n, elements=st.floats(-50, 50, allow_nan=False))
)


@settings(max_examples=500)
@given(vectors, st.floats(0.01, 5.0), st.floats(-100, 100))
def test_distribution_invariants(s, tau, shift):
    d = to_distribution(s, tau)
    n = len(s)
    assert abs(d.probs.sum() - 1) <= 1e-9
    assert (d.probs >= 0).all()
    assert -1e-12 <= d.entropy <= math.log(n) + 1e-9
    e = to_distribution(s + shift, tau)
    assert e.argmax == d.argmax
    th = Thresholds(omega_m=0.12 * (1 - 1 / n), omega_g=0.04 * (1 - 1 / n))
    # decisions can only flip when the score sits on a threshold to rounding precision
    for z in (th.zeta_g(n), th.zeta_m(n)):
        if abs(d.score - z) < 1e-9:
            return
    assert classify_goal(e, n, th) == classify_goal(d, n, th)
    assert should_terminate(e, n, th) == should_terminate(d, n, th)


def test_quality_posterior_matches_enumeration():
    noise = NoiseModel(sigma=0.2, p_bad_view=0.4, view_correlation=0.6, num_views=5, mu_bad=0.3)
    rng = np.random.default_rng(3)
    n_goals, goal, conf = 3, 2, 3
    vs = ViewState(object=1)
    for v in (1, 4):
        vs = fuse_views(vs, v, rng.normal(size=n_goals))
    got = quality_posterior(noise, vs, goal, conf, n_goals)

    p, rho = noise.p_bad_view, noise.view_correlation
    sigma = max(noise.sigma, SIGMA_FLOOR)
    weights = np.zeros(noise.num_views)
    total = 0.0
    for seq in itertools.product([0, 1], repeat=noise.num_views):  # 1 = bad
        prior = p if seq[0] else 1 - p
        for a, b in zip(seq, seq[1:]):
            prior *= rho * (a == b) + (1 - rho) * (p if b else 1 - p)
        like = 1.0
        for v, s in zip(vs.observed_views, vs.samples):
            m = view_means(noise, n_goals, goal, conf, not seq[v - 1])
            like *= math.exp(-np.sum((s - m) ** 2) / (2 * sigma**2))
        w = prior * like
        total += w
        weights += w * np.array(seq)
    np.testing.assert_allclose(got, weights / total, atol=1e-9)


def test_expected_entropy_prefers_uncorrelated_views():
    # after a bad first view with strong correlation, far views are the better bet
    noise = NoiseModel(sigma=0.03, p_bad_view=0.5, view_correlation=0.9, num_views=8)
    vs = fuse_views(ViewState(object=1), 1, np.zeros(4))
    probs = to_distribution(vs.fused, 0.1).probs
    scores = expected_entropy_after(noise, vs, probs, {}, list(range(2, 9)))
    assert scores[8] < scores[2]


def test_adding_a_good_view_does_not_raise_expected_entropy():
    rng = np.random.default_rng(5)
    n = 5
    for sigma in (0.0, 0.1, 0.3):
        noise = NoiseModel(sigma=sigma, p_bad_view=0.5)
        before, after = [], []
        for _ in range(10_000):
            goal = int(rng.integers(1, n + 1))
            first = view_means(noise, n, goal, None, rng.random() >= 0.5) + sigma * rng.normal(size=n)
            second = view_means(noise, n, goal, None, True) + sigma * rng.normal(size=n)
            before.append(to_distribution(first, 0.1).entropy)
            after.append(to_distribution((first + second) / 2, 0.1).entropy)
        assert np.mean(after) <= np.mean(before)


@pytest.mark.parametrize(
    "noise",
    [
        NoiseModel.ideal(),
        NoiseModel(sigma=0.03, p_bad_view=0.3, view_correlation=0.5),
        NoiseModel(sigma=0.05, p_bad_view=0.6),
        NoiseModel(sigma=0.1, p_bad_view=0.3, mu_bad=0.5),
    ],
)
def test_fused_matching_at_least_single_view(noise):
    multi = run_see_trials(noise, "random", 10_000, seed=8)
    single = run_see_trials(noise, "nosee", 10_000, seed=8)
    assert paired_gap_z(multi.correct, single.correct) > -1.645
