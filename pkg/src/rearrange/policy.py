"""Grasp, see and place policies."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .depgraph import FvsResult, MembershipSets
from .perception import (
    LatentViews,
    MatchingDistribution,
    NoiseModel,
    Thresholds,
    ViewState,
    classify_goal,
    expected_entropy_after,
    view_distance,
)
from .scene import BUFFER, TO_OUTSIDE, PlaceTarget, SceneSpec, SceneState, goal_is_free, goal_target


class GraspPolicyKind(str, Enum):
    PI0 = "pi0"
    GREEDY_FREE_GOAL = "greedy"
    RANDOM = "random"


class SeePolicyKind(str, Enum):
    NONE = "nosee"
    RANDOM = "random"
    GREEDY = "greedy"
    ORACLE = "oracle"


class PlaceVariant(str, Enum):
    PI0 = "pi0"  # place from the scene-level match of the grasped object
    PI1 = "pi1"  # place from the in-hand match after seeing


class NoMovableObject(RuntimeError):
    """Nothing left to grasp under the current estimate."""


@dataclass(frozen=True)
class GraspAction:
    object: int


@dataclass(frozen=True)
class SeeAction:
    view: int


def select_grasp(
    kind: GraspPolicyKind,
    state: SceneState,
    membership: MembershipSets,
    fvs: FvsResult | None,
    rng: np.random.Generator,
) -> GraspAction:
    """Pick the next object.

    ``pi0``: uniform over objects whose goal is free; if there are none, the first
    member of a minimum FVS goes next (it will be buffered).
    """
    free = sorted(membership.free)
    blocked = sorted(membership.blocked)
    if not free and not blocked:
        raise NoMovableObject("no movable object")
    kind = GraspPolicyKind(kind)
    if kind is GraspPolicyKind.PI0:
        if free:
            return GraspAction(free[int(rng.integers(len(free)))])
        if fvs is None or not fvs.members:
            raise ValueError("pi0 needs a non-empty FVS when every object is blocked")
        return GraspAction(fvs.members[0])
    if kind is GraspPolicyKind.GREEDY_FREE_GOAL:
        return GraspAction(free[0] if free else blocked[0])
    movable = sorted(free + blocked)
    return GraspAction(movable[int(rng.integers(len(movable)))])


def select_view(
    kind: SeePolicyKind,
    vs: ViewState,
    noise: NoiseModel,
    rng: np.random.Generator,
    *,
    probs: np.ndarray | None = None,
    goal_confuser: Mapping[int, int] | None = None,
    latent: LatentViews | None = None,
) -> SeeAction | None:
    """Next view to rotate to, or None to stop."""
    kind = SeePolicyKind(kind)
    if kind is SeePolicyKind.NONE:
        return None
    unobserved = [v for v in range(1, noise.num_views + 1) if v not in vs.observed_views]
    if not unobserved:
        return None

    def nearest(views: list[int]) -> int:
        return min(views, key=lambda v: (view_distance(vs.current_view, v, noise.num_views), v))

    if kind is SeePolicyKind.RANDOM:
        return SeeAction(unobserved[int(rng.integers(len(unobserved)))])
    if kind is SeePolicyKind.ORACLE:
        if latent is None:
            raise ValueError("oracle view selection needs the latent view qualities")
        good = [v for v in unobserved if latent.view_good(vs.object, v)]
        return SeeAction(nearest(good)) if good else None
    if probs is None:
        raise ValueError("greedy view selection needs the current matching distribution")
    scores = expected_entropy_after(noise, vs, probs, goal_confuser or {}, unobserved)
    best = min(scores.values())
    return SeeAction(nearest([v for v, s in scores.items() if s <= best + 1e-12]))


def select_place(
    d: MatchingDistribution,
    spec: SceneSpec,
    state: SceneState,
    thresholds: Thresholds,
) -> PlaceTarget:
    """Confident and free goal -> goal; confident but occupied -> buffer; else outside."""
    j = classify_goal(d, spec.num_goals, thresholds)
    if j is None:
        return TO_OUTSIDE
    if goal_is_free(spec, state, j):
        return goal_target(j)
    return BUFFER


def select_place_pi0(
    d_scene: MatchingDistribution,
    spec: SceneSpec,
    state: SceneState,
    thresholds: Thresholds,
) -> PlaceTarget:
    """Same rule as :func:`select_place`, fed the grasped object's scene-level match."""
    return select_place(d_scene, spec, state, thresholds)
