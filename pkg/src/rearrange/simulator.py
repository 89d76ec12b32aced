"""Episode execution: observe, grasp, see, place; step accounting and reward diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .depgraph import build_dependency_graph, classify_membership, min_fvs_exact
from .perception import (
    FUSION_MODES,
    MAX_POSES,
    NoiseModel,
    Thresholds,
    ViewState,
    classify_goal,
    draw_latent_views,
    fuse_views,
    observe_scene,
    sample_view,
    should_terminate,
    view_distance,
)
from .policy import (
    GraspPolicyKind,
    PlaceVariant,
    SeePolicyKind,
    select_grasp,
    select_place,
    select_place_pi0,
    select_view,
)
from .seeding import stream
from .scene import (
    LocKind,
    PlaceTarget,
    SceneSpec,
    SceneState,
    apply_grasp,
    apply_place,
    charge_step,
    is_at_goal,
)

R_GOAL = 1.0
R_BUFFER = 0.0
R_REPLACE = -1.5

# RNG stream tags under one episode seed
_SCENE_NOISE, _HAND_NOISE, _GRASP, _SEE, _GRASP_FAIL, _ROTATE_FAIL = range(1, 7)


@dataclass(frozen=True)
class EpisodeConfig:
    step_budget: int = 30
    max_see_steps: int = 5
    p_grasp_fail: float = 0.0
    p_rotate_fail: float = 0.0
    lam: float = 0.2
    mu: float = 0.18
    thresholds: Thresholds = field(default_factory=Thresholds)
    fusion: str = "mean"
    rng_seed: int = 0

    def __post_init__(self):
        if self.step_budget < 1:
            raise ValueError("step budget must be >= 1")
        if self.max_see_steps < 0:
            raise ValueError("max_see_steps must be >= 0")
        for name in ("p_grasp_fail", "p_rotate_fail"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}")


@dataclass(frozen=True)
class SeeRecord:
    view: int
    rotate_ok: bool
    magnitude: float
    delta_entropy: float
    match: bool
    reward: float
    probs: tuple[float, ...]


@dataclass(frozen=True)
class StepRecord:
    index: int
    grasp: int
    grasp_ok: bool
    inhand_probs: tuple[float, ...] | None
    see: tuple[SeeRecord, ...]
    place: PlaceTarget | None
    reward_grasp: float
    probs: tuple[float, ...] | None
    matched: bool | None


@dataclass
class EpisodeTrace:
    steps: list[StepRecord]
    completed: bool
    planning_steps: int
    see_steps_total: int
    match_successes: int
    picks: int
    final_state: SceneState
    step_budget: int
    seed: int

    @property
    def reward_grasp_total(self) -> float:
        return float(sum(s.reward_grasp for s in self.steps))

    @property
    def see_rewards(self) -> list[float]:
        return [r.reward for s in self.steps for r in s.see]


def check_completion(spec: SceneSpec, state: SceneState) -> bool:
    for i in spec.objects:
        if spec.true_goal[i] is None:
            if state.kind(i) is not LocKind.OUTSIDE:
                return False
        elif not is_at_goal(spec, state, i):
            return False
    return True


def compute_RG(before: SceneState, i: int, after: SceneState, spec: SceneSpec) -> float:
    if is_at_goal(spec, before, i):
        return R_REPLACE
    if is_at_goal(spec, after, i):
        return R_GOAL
    # buffer placements and (unlisted) wrong or outside placements earn nothing
    return R_BUFFER


def compute_RS(
    match_correct: bool, delta_entropy: float, rotate_ok: bool, magnitude: float, lam: float, mu: float
) -> float:
    return float(match_correct) + delta_entropy - lam * (1.0 - float(rotate_ok)) - mu * magnitude


def _snapshot(probs: np.ndarray) -> tuple[float, ...]:
    return tuple(float(p) for p in probs)


def run_see_session(
    spec: SceneSpec,
    i: int,
    see_kind: SeePolicyKind,
    noise: NoiseModel,
    config: EpisodeConfig,
    latent,
    hand_rng: np.random.Generator,
    see_rng: np.random.Generator,
    rotate_rng: np.random.Generator,
    goal_confuser: dict[int, int],
):
    """In-hand matching: free first view, then see until confident, stopped or capped.

    Returns the final distribution, the initial distribution and the see records.
    """
    tau = noise.temperature
    n = spec.num_goals
    th = config.thresholds
    vs = fuse_views(ViewState(object=i, mode=config.fusion), 1, sample_view(noise, spec, i, 1, hand_rng, latent))
    d = vs.distribution(tau)
    first = d
    records: list[SeeRecord] = []
    while len(records) < config.max_see_steps and not should_terminate(d, n, th):
        action = select_view(
            see_kind, vs, noise, see_rng, probs=d.probs, goal_confuser=goal_confuser, latent=latent
        )
        if action is None:
            break
        magnitude = view_distance(vs.current_view, action.view, noise.num_views)
        ok = not (config.p_rotate_fail > 0 and rotate_rng.random() < config.p_rotate_fail)
        h_before = d.entropy
        if ok:
            vs = fuse_views(vs, action.view, sample_view(noise, spec, i, action.view, hand_rng, latent))
            d = vs.distribution(tau)
        delta = h_before - d.entropy
        match = classify_goal(d, n, th) == spec.true_goal[i]
        records.append(
            SeeRecord(
                view=action.view,
                rotate_ok=ok,
                magnitude=float(magnitude),
                delta_entropy=float(delta),
                match=match,
                reward=compute_RS(match, delta, ok, magnitude, config.lam, config.mu),
                probs=_snapshot(d.probs),
            )
        )
    return d, first, records


def run_episode(
    spec: SceneSpec,
    grasp_kind: GraspPolicyKind,
    see_kind: SeePolicyKind,
    place_variant: PlaceVariant,
    noise: NoiseModel,
    config: EpisodeConfig,
    forced_grasps: Sequence[int] = (),
) -> EpisodeTrace:
    """Run one rearrangement episode until completion or the step budget.

    ``forced_grasps`` are taken first, in order, before the grasp policy resumes.
    """
    grasp_kind = GraspPolicyKind(grasp_kind)
    see_kind = SeePolicyKind(see_kind)
    place_variant = PlaceVariant(place_variant)
    seed = config.rng_seed
    latent = draw_latent_views(noise, spec, seed, max_poses=max(MAX_POSES, config.step_budget))
    scene_rng = stream(seed, _SCENE_NOISE)
    hand_rng = stream(seed, _HAND_NOISE)
    grasp_rng = stream(seed, _GRASP)
    see_rng = stream(seed, _SEE)
    fail_rng = stream(seed, _GRASP_FAIL)
    rotate_rng = stream(seed, _ROTATE_FAIL)
    goal_confuser = {spec.true_goal[i]: c for i, c in latent.confuser.items()}
    th = config.thresholds
    n = spec.num_goals
    th.validate(n)
    forced = list(forced_grasps)

    state = spec.initial_state()
    steps: list[StepRecord] = []
    completed = check_completion(spec, state)
    while not completed and len(steps) < config.step_budget:
        dists = observe_scene(noise, spec, state, scene_rng, latent)
        assignment = {i: classify_goal(d, n, th) for i, d in dists.items()}
        graph = build_dependency_graph(spec, state, assignment)
        if not graph.vertices:
            break
        if forced:
            obj = forced.pop(0)
            if obj not in graph.vertices:
                raise ValueError(f"forced grasp {obj} is not movable")
        else:
            membership = classify_membership(graph)
            fvs = None
            if grasp_kind is GraspPolicyKind.PI0 and not membership.free:
                fvs = min_fvs_exact(graph)
            obj = select_grasp(grasp_kind, state, membership, fvs, grasp_rng).object

        if config.p_grasp_fail > 0 and fail_rng.random() < config.p_grasp_fail:
            state = charge_step(state)
            steps.append(StepRecord(len(steps), obj, False, None, (), None, 0.0, None, None))
            continue

        before = state
        state = apply_grasp(state, obj)
        inhand_probs = None
        see_records: list[SeeRecord] = []
        if place_variant is PlaceVariant.PI1:
            d, first, see_records = run_see_session(
                spec, obj, see_kind, noise, config, latent, hand_rng, see_rng, rotate_rng, goal_confuser
            )
            inhand_probs = _snapshot(first.probs)
            target = select_place(d, spec, state, th)
        else:
            d = dists[obj]
            target = select_place_pi0(d, spec, state, th)
        state = apply_place(spec, state, obj, target)
        steps.append(
            StepRecord(
                index=len(steps),
                grasp=obj,
                grasp_ok=True,
                inhand_probs=inhand_probs,
                see=tuple(see_records),
                place=target,
                reward_grasp=compute_RG(before, obj, state, spec),
                probs=_snapshot(d.probs),
                matched=classify_goal(d, n, th) == spec.true_goal[obj],
            )
        )
        completed = check_completion(spec, state)

    picks = [s for s in steps if s.grasp_ok]
    return EpisodeTrace(
        steps=steps,
        completed=completed,
        planning_steps=len(steps) if completed else config.step_budget,
        see_steps_total=sum(len(s.see) for s in steps),
        match_successes=sum(bool(s.matched) for s in picks),
        picks=len(picks),
        final_state=state,
        step_budget=config.step_budget,
        seed=seed,
    )
