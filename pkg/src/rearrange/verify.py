"""Executable checks of the two optimality claims.

Block 1 (ideal perception): on every tiny scene and on random mid-size scenes,
the pi0 episode length, the movable-count-plus-FVS bound and exhaustive search
must agree exactly.

Block 2 (noisy perception): with paired episodes, placing from the in-hand match
must not need more steps on average than placing from the scene match, wherever
in-hand matching is clearly more accurate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations, product

import numpy as np

from .depgraph import build_dependency_graph, classify_membership, optimal_step_lower_bound
from .evaluation import paired_bootstrap_ci, run_see_trials, scene_view_accuracy
from .experiment import ExperimentSpec, PolicySpec, ScenarioSource, run_summaries, truncate
from .oracle import brute_force_min_steps
from .perception import NoiseModel
from .scene import GOAL_WIDTH, SceneSpec, generate_scene, random_params
from .seeding import derive_seed, stream
from .simulator import EpisodeConfig, run_episode

PI0 = PolicySpec("pi0", "nosee", "pi0")
PI1 = PolicySpec("pi0", "greedy", "pi1")

# accuracy gaps (fractions) that define the premise and the significance requirement
MIN_GAP = 0.10
STRICT_GAP = 0.20


def default_grid() -> tuple[tuple[str, NoiseModel], ...]:
    base = dict(sigma=0.03, p_bad_view=0.3, view_correlation=0.5)
    return tuple(
        (f"scene_bad_{p:.2f}", NoiseModel(p_bad_scene=p, **base)) for p in (0.2, 0.3, 0.45)
    )


@dataclass(frozen=True)
class VerifyConfig:
    seed: int
    tiny_max_objects: int = 4
    mid_scenes: int = 200
    mid_max_objects: int = 6
    grid: tuple[tuple[str, NoiseModel], ...] = field(default_factory=default_grid)
    episodes: int = 2000
    accuracy_trials: int = 4000
    n_boot: int = 2000
    step_budget: int = 30


# --- block 1 ---------------------------------------------------------------------------


def enumerate_tiny_scenes(max_objects: int = 4) -> list[SceneSpec]:
    """Every occupancy pattern with up to ``max_objects`` objects and at least two goals.

    Goal object ``i`` owns goal ``i``; each object starts on one goal (at most one
    object per goal) or on its own free slot.
    """
    scenes = []
    for n_obj in range(2, max_objects + 1):
        for n_goal in range(2, n_obj + 1):
            goals = list(range(1, n_goal + 1))
            for starts in product([0] + goals, repeat=n_obj):
                used = [s for s in starts if s]
                if len(used) != len(set(used)):
                    continue
                initial = {}
                slot = n_goal
                for i, s in enumerate(starts, start=1):
                    if s:
                        base = GOAL_WIDTH * (s - 1)
                    else:
                        base = GOAL_WIDTH * slot
                        slot += 1
                    initial[i] = frozenset(range(base, base + GOAL_WIDTH))
                scenes.append(
                    SceneSpec(
                        num_objects=n_obj,
                        num_goals=n_goal,
                        true_goal={i: (i if i <= n_goal else None) for i in range(1, n_obj + 1)},
                        initial_footprint=initial,
                        goal_footprint={
                            j: frozenset(range(GOAL_WIDTH * (j - 1), GOAL_WIDTH * j)) for j in goals
                        },
                        cell_universe=frozenset(range(GOAL_WIDTH * slot)),
                    )
                )
    return scenes


@dataclass(frozen=True)
class OptimalityCheck:
    episode_steps: int
    bound: int
    search: int
    completed: bool

    @property
    def ok(self) -> bool:
        return self.completed and self.episode_steps == self.bound == self.search


def check_optimality(spec: SceneSpec, seed: int) -> OptimalityCheck:
    tr = run_episode(spec, "pi0", "nosee", "pi0", NoiseModel.ideal(), EpisodeConfig(rng_seed=seed))
    return OptimalityCheck(tr.planning_steps, optimal_step_lower_bound(spec), brute_force_min_steps(spec), tr.completed)


def random_scenes(n: int, max_objects: int, seed: int) -> list[SceneSpec]:
    return [generate_scene(random_params(stream(seed, 31, k), max_objects)) for k in range(n)]


@dataclass
class Block1:
    tiny: int
    tiny_failures: list[int]
    mid: int
    mid_failures: list[int]

    @property
    def passed(self) -> bool:
        return not self.tiny_failures and not self.mid_failures

    def lines(self) -> list[str]:
        return [
            "[ideal perception: pi0 steps == movable + min FVS == exhaustive search]",
            f"  tiny scenes (exhaustive)   {self.tiny:6d}  mismatches {len(self.tiny_failures)}",
            f"  random scenes              {self.mid:6d}  mismatches {len(self.mid_failures)}",
            f"  first mismatches           {(self.tiny_failures + self.mid_failures)[:5]}",
            f"  result                     {'PASS' if self.passed else 'FAIL'}",
        ]


def run_block1(cfg: VerifyConfig) -> Block1:
    tiny = enumerate_tiny_scenes(cfg.tiny_max_objects)
    mid = random_scenes(cfg.mid_scenes, cfg.mid_max_objects, cfg.seed)
    tiny_bad = [k for k, s in enumerate(tiny) if not check_optimality(s, derive_seed(cfg.seed, 1, k)).ok]
    mid_bad = [k for k, s in enumerate(mid) if not check_optimality(s, derive_seed(cfg.seed, 2, k)).ok]
    return Block1(len(tiny), tiny_bad, len(mid), mid_bad)


def grasp_order_totals(spec: SceneSpec) -> set[int]:
    """Episode totals over every ordering of the initially free objects (ideal perception)."""
    g = build_dependency_graph(spec, spec.initial_state(), spec.true_goal)
    free = sorted(classify_membership(g).free)
    totals = set()
    for order in permutations(free):
        tr = run_episode(
            spec, "pi0", "nosee", "pi0", NoiseModel.ideal(), EpisodeConfig(), forced_grasps=order
        )
        totals.add(tr.planning_steps if tr.completed else -1)
    return totals


# --- block 2 ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridPoint:
    name: str
    scene_accuracy: float
    inhand_accuracy: float
    steps_pi0: float
    steps_pi1: float
    ci: tuple[float, float]  # of mean(steps_pi0 - steps_pi1)
    pairs: int

    @property
    def gap(self) -> float:
        return self.inhand_accuracy - self.scene_accuracy

    @property
    def in_premise(self) -> bool:
        return self.gap >= MIN_GAP

    @property
    def ok(self) -> bool:
        if self.steps_pi1 > self.steps_pi0:
            return False
        if self.gap >= STRICT_GAP and not self.ci[0] > 0:
            return False
        return self.in_premise


@dataclass
class Block2:
    points: list[GridPoint]
    control_max_abs_diff: float

    @property
    def passed(self) -> bool:
        return bool(self.points) and all(p.ok for p in self.points) and self.control_max_abs_diff == 0

    def lines(self) -> list[str]:
        out = ["[noisy perception: in-hand placement needs no more steps than scene placement]"]
        out.append(
            "  point               acc_scene  acc_hand    gap  steps_pi0  steps_pi1    ci_lo    ci_hi  pairs  ok"
        )
        for p in self.points:
            out.append(
                f"  {p.name:<18}  {p.scene_accuracy:9.4f}  {p.inhand_accuracy:8.4f}  {p.gap:5.3f}"
                f"  {p.steps_pi0:9.4f}  {p.steps_pi1:9.4f}  {p.ci[0]:7.4f}  {p.ci[1]:7.4f}"
                f"  {p.pairs:5d}  {'yes' if p.ok else 'no'}"
            )
        out.append(f"  ideal control max |diff|   {self.control_max_abs_diff:.4f}")
        out.append(f"  result                     {'PASS' if self.passed else 'FAIL'}")
        return out


def paired_steps(cfg: VerifyConfig, noises, episodes: int) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    exp = ExperimentSpec(
        scenarios=(ScenarioSource("random", random_max_objects=cfg.mid_max_objects),),
        policies=(PI0, PI1),
        noises=tuple(noises),
        episodes=episodes,
        budgets=(cfg.step_budget,),
        seed=cfg.seed,
    )
    by_cell: dict[tuple, list[int]] = {}
    for s in run_summaries(exp):
        if s.error is not None:
            raise RuntimeError(f"episode {s.episode} of cell {s.cell} failed: {s.error}")
        by_cell.setdefault(s.cell, []).append(truncate(s, cfg.step_budget).steps)
    return {
        name: (np.array(by_cell[(0, k, 0)]), np.array(by_cell[(0, k, 1)]))
        for k, (name, _) in enumerate(noises)
    }


def run_block2(cfg: VerifyConfig) -> Block2:
    steps = paired_steps(cfg, cfg.grid, cfg.episodes)
    points = []
    for k, (name, noise) in enumerate(cfg.grid):
        a, b = steps[name]
        acc_seed = derive_seed(cfg.seed, 3, k)
        points.append(
            GridPoint(
                name=name,
                scene_accuracy=scene_view_accuracy(noise, cfg.accuracy_trials, acc_seed),
                inhand_accuracy=run_see_trials(noise, PI1.see, cfg.accuracy_trials, acc_seed).match_success,
                steps_pi0=float(a.mean()),
                steps_pi1=float(b.mean()),
                ci=paired_bootstrap_ci(a - b, derive_seed(cfg.seed, 4, k), cfg.n_boot),
                pairs=len(a),
            )
        )
    ctrl = paired_steps(cfg, (("ideal", NoiseModel.ideal()),), max(1, cfg.episodes // 10))["ideal"]
    return Block2(points, float(np.abs(ctrl[0] - ctrl[1]).max()))


@dataclass
class VerifyReport:
    seed: int
    block1: Block1
    block2: Block2

    @property
    def passed(self) -> bool:
        return self.block1.passed and self.block2.passed

    def text(self) -> str:
        lines = [f"verify  seed={self.seed}", ""]
        lines += self.block1.lines() + [""] + self.block2.lines() + [""]
        lines.append(f"overall  {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def verify_theorems(cfg: VerifyConfig) -> VerifyReport:
    return VerifyReport(cfg.seed, run_block1(cfg), run_block2(cfg))
