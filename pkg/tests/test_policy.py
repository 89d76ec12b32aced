import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rearrange.depgraph import DependencyGraph, build_dependency_graph, classify_membership, min_fvs_exact
from rearrange.perception import (
    SIGMA_FLOOR,
    LatentViews,
    NoiseModel,
    Thresholds,
    ViewState,
    _standard_draws,
    draw_latent_views,
    fuse_views,
    observe_scene,
    to_distribution,
    view_means,
)
from rearrange.policy import (
    NoMovableObject,
    select_grasp,
    select_place,
    select_place_pi0,
    select_view,
)
from rearrange.scene import (
    BUFFER,
    TO_OUTSIDE,
    ScenarioParams,
    apply_grasp,
    apply_place,
    generate_scene,
    goal_is_free,
    goal_target,
    random_params,
)
from rearrange.seeding import stream

TH = Thresholds()


def membership(vertices, arcs):
    g = DependencyGraph.from_arcs(vertices, arcs)
    return g, classify_membership(g)


def test_pi0_grasp_is_uniform_over_free_objects():
    g, m = membership(range(1, 6), [(4, 1), (5, 4)])
    rng = np.random.default_rng(0)
    n = 6000
    counts = Counter(select_grasp("pi0", None, m, None, rng).object for _ in range(n))
    assert set(counts) == {1, 2, 3}
    expected = n / 3
    chi2 = sum((counts[k] - expected) ** 2 / expected for k in (1, 2, 3))
    assert chi2 < 13.8  # chi-square, 2 dof, p = 0.001


def test_pi0_grasp_buffers_first_fvs_member_when_all_blocked():
    g, m = membership([1, 2, 3], [(1, 2), (2, 3), (3, 1)])
    fvs = min_fvs_exact(g)
    assert select_grasp("pi0", None, m, fvs, np.random.default_rng(0)).object == 1
    with pytest.raises(ValueError):
        select_grasp("pi0", None, m, None, np.random.default_rng(0))


def test_grasp_with_nothing_movable():
    g, m = membership([], [])
    with pytest.raises(NoMovableObject):
        select_grasp("random", None, m, None, np.random.default_rng(0))


def test_greedy_grasp_prefers_free_lowest_id():
    g, m = membership([1, 2, 3], [(1, 2)])
    assert select_grasp("greedy", None, m, None, np.random.default_rng(0)).object == 2


def vs_with(views, n=3, sample=None):
    vs = ViewState(object=1)
    for v in views:
        vs = fuse_views(vs, v, np.zeros(n) if sample is None else sample)
    return vs


def test_nosee_stops_and_full_coverage_stops():
    noise = NoiseModel(num_views=3)
    assert select_view("nosee", vs_with([1]), noise, np.random.default_rng(0)) is None
    full = vs_with([1, 2, 3])
    for kind in ("random", "greedy"):
        assert select_view(kind, full, noise, np.random.default_rng(0), probs=np.ones(3) / 3) is None


def test_oracle_goes_to_nearest_good_view():
    noise = NoiseModel(num_views=6)
    good = (False, False, True, False, True, False)
    latent = LatentViews(inhand_good={1: good}, confuser={}, scene_good_by_pose={1: (True,)})
    vs = vs_with([1])
    # views 3 and 5 are good; 5 is two steps away around the circle, 3 is two steps the other way
    assert select_view("oracle", vs, noise, None, latent=latent).view == 3
    vs = fuse_views(vs, 3, np.zeros(3))
    assert select_view("oracle", vs, noise, None, latent=latent).view == 5
    bad = LatentViews(inhand_good={1: (False,) * 6}, confuser={}, scene_good_by_pose={1: (True,)})
    assert select_view("oracle", vs_with([1]), noise, None, latent=bad) is None


def test_random_view_is_uniform_over_unobserved():
    noise = NoiseModel(num_views=5)
    vs = vs_with([1, 3])
    rng = np.random.default_rng(1)
    counts = Counter(select_view("random", vs, noise, rng).view for _ in range(3000))
    assert set(counts) == {2, 4, 5}
    chi2 = sum((c - 1000) ** 2 / 1000 for c in counts.values())
    assert chi2 < 13.8


def enumerated_expected_entropy(noise, vs, probs, goal_confuser, v):
    """E[H after view v] by explicit enumeration of identity and every quality sequence."""
    n_goals = len(probs)
    p, rho = noise.p_bad_view, noise.view_correlation
    sigma = max(noise.sigma, SIGMA_FLOOR)
    draws = _standard_draws(n_goals) if noise.sigma > 0 else np.zeros((1, n_goals))
    total = 0.0
    for j in range(1, n_goals + 1):
        post_bad, norm = 0.0, 0.0
        for seq in itertools.product([0, 1], repeat=noise.num_views):
            prior = p if seq[0] else 1 - p
            for a, b in zip(seq, seq[1:]):
                prior *= rho * (a == b) + (1 - rho) * (p if b else 1 - p)
            like = 1.0
            for view, s in zip(vs.observed_views, vs.samples):
                m = view_means(noise, n_goals, j, goal_confuser.get(j), not seq[view - 1])
                like *= math.exp(-np.sum((s - m) ** 2) / (2 * sigma**2))
            norm += prior * like
            post_bad += prior * like * seq[v - 1]
        q_bad = post_bad / norm
        for good, w in ((True, 1 - q_bad), (False, q_bad)):
            hs = []
            for z in draws:
                x = view_means(noise, n_goals, j, goal_confuser.get(j), good) + noise.sigma * z
                k = len(vs.samples)
                fused = (k * vs.fused + x) / (k + 1)
                hs.append(to_distribution(fused, noise.temperature).entropy)
            total += probs[j - 1] * w * np.mean(hs)
    return total


@pytest.mark.parametrize("seed", range(6))
def test_greedy_view_matches_enumeration_oracle(seed):
    rng = np.random.default_rng(seed)
    noise = NoiseModel(sigma=0.1, p_bad_view=0.4, view_correlation=0.7, num_views=3, mu_bad=0.2)
    gc = {1: 2, 2: 3}
    first = int(rng.integers(1, 4))
    vs = fuse_views(ViewState(object=1, current_view=first), first, rng.normal(0.3, 0.3, size=3))
    probs = to_distribution(vs.fused, noise.temperature).probs
    unobserved = [v for v in (1, 2, 3) if v != first]
    oracle = {v: enumerated_expected_entropy(noise, vs, probs, gc, v) for v in unobserved}
    best = min(oracle.values())
    ties = [v for v in unobserved if oracle[v] <= best + 1e-9]
    got = select_view("greedy", vs, noise, None, probs=probs, goal_confuser=gc)
    assert got.view in ties


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.integers(1, 12), unique=True, min_size=1, max_size=11))
def test_greedy_never_repeats_a_view(seed, views):
    rng = np.random.default_rng(seed)
    noise = NoiseModel(sigma=0.1, p_bad_view=0.5, view_correlation=0.5)
    vs = ViewState(object=1)
    for v in views:
        vs = fuse_views(vs, v, rng.normal(size=4) * 0.3)
    probs = to_distribution(vs.fused, noise.temperature).probs
    got = select_view("greedy", vs, noise, None, probs=probs, goal_confuser={})
    assert got.view not in views


def _walk(seed, steps=15):
    """Random reachable states of a random scene."""
    spec = generate_scene(random_params(np.random.default_rng(seed), 6))
    rng = np.random.default_rng(seed + 1)
    s = spec.initial_state()
    states = []
    for _ in range(steps):
        vis = s.visible()
        if not vis:
            break
        i = vis[int(rng.integers(len(vis)))]
        s = apply_grasp(s, i)
        states.append((s, i))
        free = [j for j in spec.goal_footprint if goal_is_free(spec, s, j)]
        options = [BUFFER, TO_OUTSIDE] + [goal_target(j) for j in free]
        s = apply_place(spec, s, i, options[int(rng.integers(len(options)))])
    return spec, states


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 0.5))
def test_place_never_targets_an_occupied_goal(seed, sigma):
    spec, states = _walk(seed)
    rng = np.random.default_rng(seed)
    for s, i in states:
        d = to_distribution(rng.normal(size=spec.num_goals) * sigma * 10, 0.1)
        t = select_place(d, spec, s, TH)
        if t.kind == "goal":
            assert goal_is_free(spec, s, t.goal)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_ideal_perception_both_place_rules_agree(seed):
    spec, states = _walk(seed)
    noise = NoiseModel.ideal()
    lat = draw_latent_views(noise, spec, seed)
    for s, i in states:
        scene = to_distribution(view_means(noise, spec.num_goals, spec.true_goal[i], None, True), 0.1)
        hand = to_distribution(
            view_means(noise, spec.num_goals, spec.true_goal[i], None, lat.view_good(i, 1)), 0.1
        )
        assert select_place(hand, spec, s, TH) == select_place_pi0(scene, spec, s, TH)


def test_place_rule_examples():
    spec = generate_scene(ScenarioParams(2, cycle_type=(2,)))
    a, b = spec.objects
    s = apply_grasp(spec.initial_state(), a)
    confident = to_distribution(view_means(NoiseModel(), 2, spec.true_goal[a], None, True), 0.1)
    assert select_place(confident, spec, s, TH) == BUFFER
    unsure = to_distribution(np.zeros(2), 0.1)
    assert select_place(unsure, spec, s, TH) == TO_OUTSIDE
    s = apply_place(spec, s, a, BUFFER)
    s = apply_grasp(s, b)
    d = to_distribution(view_means(NoiseModel(), 2, spec.true_goal[b], None, True), 0.1)
    assert select_place(d, spec, s, TH) == goal_target(spec.true_goal[b])


def test_observe_then_membership_on_swap():
    spec = generate_scene(ScenarioParams(2, cycle_type=(2,)))
    noise = NoiseModel.ideal()
    d = observe_scene(noise, spec, spec.initial_state(), stream(0), draw_latent_views(noise, spec, 0))
    est = {i: x.argmax for i, x in d.items()}
    m = classify_membership(build_dependency_graph(spec, spec.initial_state(), est))
    assert m.free == frozenset() and m.cyclic == set(spec.objects)
