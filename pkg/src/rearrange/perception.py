"""Synthetic object matching: similarity generator, multi-view fusion and matching distributions.

Each object has latent per-view qualities. A good view puts the high mean on the
true goal; a bad (ambiguous) view lowers it and, when the object has a
look-alike goal, boosts that goal instead. Similarities are softmaxed into a
categorical matching distribution over the N goals.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Mapping

import numpy as np

from .scene import SceneSpec, SceneState
from .seeding import stream

# Slack for threshold comparisons so that m == zeta is not lost to rounding.
THRESHOLD_EPS = 1e-12
# Likelihood width used when the generator itself is noiseless.
SIGMA_FLOOR = 0.05
NOISE_DRAWS = 32
# placements per object covered by the pre-drawn scene-view qualities
MAX_POSES = 256

FUSION_MODES = ("mean", "latest")


@dataclass(frozen=True)
class NoiseModel:
    mu_match: float = 1.0
    mu_nonmatch: float = 0.0
    sigma: float = 0.0
    p_bad_view: float = 0.0
    mu_bad: float = 0.0
    temperature: float = 0.1
    num_views: int = 12
    # object id -> look-alike goal boosted on that object's bad views
    confuser: Mapping[int, int] | None = None
    # draw a look-alike goal per goal object from the episode seed
    random_confuser: bool = False
    # ambiguity of the top-down scene view; None means p_bad_view
    p_bad_scene: float | None = None
    # probability that adjacent in-hand views share quality
    view_correlation: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.mu_match > self.mu_nonmatch:
            raise ValueError("mu_match must exceed mu_nonmatch")
        if self.num_views < 1:
            raise ValueError("need at least one view")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        for name in ("p_bad_view", "view_correlation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.p_bad_scene is not None and not 0.0 <= self.p_bad_scene <= 1.0:
            raise ValueError("p_bad_scene must lie in [0, 1]")

    @property
    def scene_bad_rate(self) -> float:
        return self.p_bad_view if self.p_bad_scene is None else self.p_bad_scene

    @classmethod
    def ideal(cls, **kw) -> "NoiseModel":
        return cls(sigma=0.0, p_bad_view=0.0, p_bad_scene=0.0, **kw)


@dataclass(frozen=True)
class Thresholds:
    omega_m: float = 0.12
    omega_g: float = 0.04

    def validate(self, n_goals: int) -> None:
        if not 0 < self.omega_g <= self.omega_m < 1 - 1 / n_goals:
            raise ValueError(
                f"need 0 < omega_g <= omega_m < 1 - 1/N, got {self.omega_g}, {self.omega_m}, N={n_goals}"
            )

    def zeta_g(self, n_goals: int) -> float:
        return 1.0 / n_goals + self.omega_g

    def zeta_m(self, n_goals: int) -> float:
        return 1.0 / n_goals + self.omega_m


@dataclass(frozen=True)
class MatchingDistribution:
    probs: np.ndarray

    @property
    def score(self) -> float:
        return float(self.probs.max())

    @property
    def argmax(self) -> int:
        """1-based goal index; ties go to the lowest index."""
        return int(np.argmax(self.probs)) + 1

    @property
    def entropy(self) -> float:
        return entropy(self)


def to_distribution(s: np.ndarray, tau: float) -> MatchingDistribution:
    z = np.asarray(s, dtype=float) / tau
    z = z - z.max()
    e = np.exp(z)
    return MatchingDistribution(e / e.sum())


def entropy(d: MatchingDistribution) -> float:
    p = d.probs[d.probs > 0]
    return float(-(p * np.log(p)).sum())


def classify_goal(d: MatchingDistribution, n_goals: int, thresholds: Thresholds) -> int | None:
    if d.score >= thresholds.zeta_g(n_goals) - THRESHOLD_EPS:
        return d.argmax
    return None


def should_terminate(d: MatchingDistribution, n_goals: int, thresholds: Thresholds) -> bool:
    return d.score >= thresholds.zeta_m(n_goals) - THRESHOLD_EPS


# --- latent view qualities -----------------------------------------------------------


def _markov_qualities(rng: np.random.Generator, n: int, p_bad: float, rho: float) -> tuple[bool, ...]:
    """True = good. Stationary bad rate p_bad; a view repeats its predecessor with prob rho."""
    good = []
    for v in range(n):
        if v > 0 and rng.random() < rho:
            good.append(good[-1])
        else:
            good.append(bool(rng.random() >= p_bad))
    return tuple(good)


@dataclass(frozen=True)
class LatentViews:
    """Frozen per-episode view qualities and look-alike goals."""

    inhand_good: Mapping[int, tuple[bool, ...]]
    confuser: Mapping[int, int]
    # per object, the scene-view quality of each successive placement
    scene_good_by_pose: Mapping[int, tuple[bool, ...]]

    def view_good(self, i: int, view: int) -> bool:
        return self.inhand_good[i][view - 1]

    def scene_good(self, i: int, pose: int) -> bool:
        """Quality of the scene view of object ``i`` in its ``pose``-th placement."""
        return self.scene_good_by_pose[i][pose]


def resolve_confusers(noise: NoiseModel, spec: SceneSpec, seed: int) -> dict[int, int]:
    if noise.confuser is not None:
        return {
            int(i): int(g)
            for i, g in noise.confuser.items()
            if spec.true_goal.get(int(i)) is not None and g != spec.true_goal[int(i)]
        }
    if not noise.random_confuser or spec.num_goals < 2:
        return {}
    rng = stream(seed, 17)
    out = {}
    for i in spec.goal_objects:
        others = [j for j in range(1, spec.num_goals + 1) if j != spec.true_goal[i]]
        out[i] = others[int(rng.integers(len(others)))]
    return out


def draw_latent_views(
    noise: NoiseModel, spec: SceneSpec, seed: int, max_poses: int = MAX_POSES
) -> LatentViews:
    """All latent qualities of one episode, fixed up front from ``seed``."""
    inhand = {
        i: _markov_qualities(stream(seed, 11, i), noise.num_views, noise.p_bad_view, noise.view_correlation)
        for i in spec.objects
    }
    scene = {
        i: tuple(bool(u) for u in stream(seed, 13, i).random(max_poses + 1) >= noise.scene_bad_rate)
        for i in spec.objects
    }
    return LatentViews(inhand_good=inhand, confuser=resolve_confusers(noise, spec, seed), scene_good_by_pose=scene)


def view_means(
    noise: NoiseModel, n_goals: int, true_goal: int | None, confuser_goal: int | None, good: bool
) -> np.ndarray:
    means = np.full(n_goals, noise.mu_nonmatch, dtype=float)
    if true_goal is None:
        return means
    if good:
        means[true_goal - 1] = noise.mu_match
    else:
        means[true_goal - 1] = noise.mu_bad
        if confuser_goal is not None:
            means[confuser_goal - 1] = noise.mu_match
    return means


def sample_view(
    noise: NoiseModel,
    spec: SceneSpec,
    i: int,
    view: int,
    rng: np.random.Generator,
    latent: LatentViews,
) -> np.ndarray:
    """Similarity vector of in-hand view ``view`` (1-based) of object ``i``."""
    if not 1 <= view <= noise.num_views:
        raise ValueError(f"view {view} outside 1..{noise.num_views}")
    mean = view_means(
        noise, spec.num_goals, spec.true_goal[i], latent.confuser.get(i), latent.view_good(i, view)
    )
    return mean + noise.sigma * rng.standard_normal(spec.num_goals)


def sample_scene_view(
    noise: NoiseModel,
    spec: SceneSpec,
    state: SceneState,
    i: int,
    rng: np.random.Generator,
    latent: LatentViews,
) -> np.ndarray:
    good = latent.scene_good(i, state.moves.get(i, 0))
    mean = view_means(noise, spec.num_goals, spec.true_goal[i], latent.confuser.get(i), good)
    return mean + noise.sigma * rng.standard_normal(spec.num_goals)


def observe_scene(
    noise: NoiseModel,
    spec: SceneSpec,
    state: SceneState,
    rng: np.random.Generator,
    latent: LatentViews,
) -> dict[int, MatchingDistribution]:
    """One scene view per object on the table or in the buffer."""
    return {
        i: to_distribution(sample_scene_view(noise, spec, state, i, rng, latent), noise.temperature)
        for i in state.visible()
    }


# --- in-hand multi-view fusion -------------------------------------------------------


@dataclass(frozen=True)
class ViewState:
    object: int
    observed_views: tuple[int, ...] = ()
    samples: tuple[np.ndarray, ...] = ()
    fused: np.ndarray | None = None
    current_view: int = 1
    mode: str = "mean"

    def distribution(self, tau: float) -> MatchingDistribution:
        if self.fused is None:
            raise ValueError("no observation yet")
        return to_distribution(self.fused, tau)


def fuse_views(state: ViewState, view: int, sample: np.ndarray) -> ViewState:
    """Add one observation; ``mean`` averages every sample, ``latest`` keeps the newest."""
    sample = np.asarray(sample, dtype=float)
    if state.fused is not None and sample.shape != state.fused.shape:
        raise ValueError(f"sample length {sample.shape} does not match {state.fused.shape}")
    if view in state.observed_views:
        raise ValueError(f"view {view} already observed")
    if state.mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode {state.mode!r}")
    samples = state.samples + (sample,)
    fused = np.mean(samples, axis=0) if state.mode == "mean" else sample
    return replace(
        state,
        observed_views=state.observed_views + (view,),
        samples=samples,
        fused=fused,
        current_view=view,
    )


def view_distance(a: int, b: int, num_views: int) -> float:
    """Rotation angle between two views on a circle of ``num_views`` positions."""
    d = abs(a - b) % num_views
    return min(d, num_views - d) * (2 * np.pi / num_views)


# --- model-based lookahead (used by the entropy-greedy view selector) ----------------


@lru_cache(maxsize=64)
def _standard_draws(n_goals: int, count: int = NOISE_DRAWS) -> np.ndarray:
    return np.random.default_rng(20240611).standard_normal((count, n_goals))


def _transition(noise: NoiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Initial distribution and transition matrix over (good, bad)."""
    p, rho = noise.p_bad_view, noise.view_correlation
    init = np.array([1.0 - p, p])
    trans = rho * np.eye(2) + (1.0 - rho) * init[None, :]
    return init, trans


def _log_emissions(
    noise: NoiseModel, vs: ViewState, goal_confuser: Mapping[int, int], n_goals: int
) -> np.ndarray:
    """log p(sample | identity, quality) per view; zeros for unobserved views. Shape (N, V, 2)."""
    sigma = max(noise.sigma, SIGMA_FLOOR)
    out = np.zeros((n_goals, noise.num_views, 2))
    if not vs.observed_views:
        return out
    means = np.array(
        [
            [view_means(noise, n_goals, j, goal_confuser.get(j), good) for good in (True, False)]
            for j in range(1, n_goals + 1)
        ]
    )  # (N, 2, N)
    idx = np.array(vs.observed_views) - 1
    samples = np.array(vs.samples)  # (K, N)
    sq = ((samples[None, :, None, :] - means[:, None, :, :]) ** 2).sum(axis=-1)  # (N, K, 2)
    out[:, idx, :] = -sq / (2 * sigma**2)
    return out


def quality_posteriors(
    noise: NoiseModel, vs: ViewState, goal_confuser: Mapping[int, int], n_goals: int
) -> np.ndarray:
    """P(view v is bad | observations, identity j) via forward-backward; shape (N, V)."""
    init, trans = _transition(noise)
    loge = _log_emissions(noise, vs, goal_confuser, n_goals)
    emis = np.exp(loge - loge.max(axis=2, keepdims=True))
    n = noise.num_views
    alpha = np.zeros((n_goals, n, 2))
    beta = np.ones((n_goals, n, 2))
    a = init[None, :] * emis[:, 0]
    alpha[:, 0] = a / a.sum(axis=1, keepdims=True)
    for v in range(1, n):
        a = (alpha[:, v - 1] @ trans) * emis[:, v]
        alpha[:, v] = a / a.sum(axis=1, keepdims=True)
    for v in range(n - 2, -1, -1):
        b = (emis[:, v + 1] * beta[:, v + 1]) @ trans.T
        beta[:, v] = b / b.sum(axis=1, keepdims=True)
    post = alpha * beta
    post /= post.sum(axis=2, keepdims=True)
    return post[:, :, 1]


def quality_posterior(
    noise: NoiseModel, vs: ViewState, goal: int, confuser_goal: int | None, n_goals: int
) -> np.ndarray:
    """P(view v is bad | observations, identity = goal); shape (V,)."""
    gc = {} if confuser_goal is None else {goal: confuser_goal}
    return quality_posteriors(noise, vs, gc, n_goals)[goal - 1]


def outcome_entropies(
    noise: NoiseModel, vs: ViewState, goal_confuser: Mapping[int, int], n_goals: int
) -> np.ndarray:
    """Expected post-fusion entropy for each (identity, quality) of a new view; shape (N, 2)."""
    draws = _standard_draws(n_goals) if noise.sigma > 0 else np.zeros((1, n_goals))
    means = np.array(
        [
            [view_means(noise, n_goals, j, goal_confuser.get(j), good) for good in (True, False)]
            for j in range(1, n_goals + 1)
        ]
    )  # (N, 2, N)
    x = means[:, :, None, :] + noise.sigma * draws[None, None, :, :]
    if vs.mode == "mean" and vs.fused is not None:
        k = len(vs.samples)
        x = (k * vs.fused + x) / (k + 1)
    z = x / noise.temperature
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=-1)
    return h.mean(axis=-1)


def expected_entropy_after(
    noise: NoiseModel,
    vs: ViewState,
    probs: np.ndarray,
    goal_confuser: Mapping[int, int],
    candidates: list[int],
) -> dict[int, float]:
    """E[H after observing view v], marginalising identity (weighted by ``probs``) and quality."""
    n_goals = len(probs)
    ent = outcome_entropies(noise, vs, goal_confuser, n_goals)  # (N, 2)
    bad = quality_posteriors(noise, vs, goal_confuser, n_goals)  # (N, V)
    w = np.asarray(probs, dtype=float)
    cols = np.array(candidates) - 1
    per_view = (w[:, None] * ((1 - bad[:, cols]) * ent[:, :1] + bad[:, cols] * ent[:, 1:])).sum(axis=0)
    return {v: float(x) for v, x in zip(candidates, per_view)}
