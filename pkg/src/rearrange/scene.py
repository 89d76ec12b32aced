"""Abstract tabletop workspace: objects, goal regions, occupancy and scenario generation.

Geometry is reduced to sets of integer cells. An object "occupies" a goal when
its current footprint intersects the goal footprint. The buffer is an off-grid
holding area with unlimited capacity; objects placed outside go to a bin and
never come back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

Footprint = frozenset  # frozenset[int]

# Marker for "not one of the goal objects" in assignments and ground truth.
NONGOAL = None

GOAL_WIDTH = 2  # cells per generated goal/free slot


class SceneError(ValueError):
    """Invalid scene, scenario parameters or state."""


class PlacementError(RuntimeError):
    """A place or grasp that the state does not allow (a policy bug)."""


class LocKind(str, Enum):
    PLACED = "placed"
    BUFFER = "buffer"
    OUTSIDE = "outside"
    HAND = "hand"


@dataclass(frozen=True)
class Location:
    kind: LocKind
    cells: frozenset = frozenset()

    @staticmethod
    def placed(cells: Iterable[int]) -> "Location":
        return Location(LocKind.PLACED, frozenset(cells))


IN_BUFFER = Location(LocKind.BUFFER)
OUTSIDE = Location(LocKind.OUTSIDE)
IN_HAND = Location(LocKind.HAND)


@dataclass(frozen=True)
class PlaceTarget:
    """Where to put the in-hand object: a goal index, the buffer or outside."""

    kind: str  # "goal" | "buffer" | "outside"
    goal: int | None = None

    def __post_init__(self):
        if self.kind not in ("goal", "buffer", "outside"):
            raise ValueError(f"unknown place target kind {self.kind!r}")
        if (self.kind == "goal") != (self.goal is not None):
            raise ValueError("goal index required exactly for goal targets")

    def __str__(self) -> str:
        return f"goal:{self.goal}" if self.kind == "goal" else self.kind


def goal_target(j: int) -> PlaceTarget:
    return PlaceTarget("goal", int(j))


BUFFER = PlaceTarget("buffer")
TO_OUTSIDE = PlaceTarget("outside")


@dataclass(frozen=True)
class ScenarioParams:
    num_goal_objects: int
    num_nongoal_objects: int = 0
    cycle_type: tuple[int, ...] = ()
    fraction_at_goal: float = 0.0
    rng_seed: int = 0
    # probability that an off-goal, non-cycle object sits on a later object's goal
    p_chain: float = 0.0
    # probability that a non-goal object sits on a free goal region
    p_nongoal_on_goal: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cycle_type", tuple(int(c) for c in self.cycle_type))

    def validate(self) -> None:
        if self.num_goal_objects < 0 or self.num_nongoal_objects < 0:
            raise SceneError("object counts must be non-negative")
        if self.num_goal_objects + self.num_nongoal_objects < 1:
            raise SceneError("a scene needs at least one object")
        if any(c < 2 for c in self.cycle_type):
            raise SceneError(f"cycle lengths must be >= 2, got {self.cycle_type}")
        if sum(self.cycle_type) > self.num_goal_objects:
            raise SceneError(
                f"cycles {self.cycle_type} need {sum(self.cycle_type)} goal objects, "
                f"only {self.num_goal_objects} requested"
            )
        for name in ("fraction_at_goal", "p_chain", "p_nongoal_on_goal"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SceneError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class SceneSpec:
    """Immutable ground truth of one rearrangement problem."""

    num_objects: int
    num_goals: int
    true_goal: Mapping[int, int | None]
    initial_footprint: Mapping[int, frozenset]
    goal_footprint: Mapping[int, frozenset]
    cell_universe: frozenset
    params: ScenarioParams | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        objs = set(range(1, self.num_objects + 1))
        goals = set(range(1, self.num_goals + 1))
        if self.num_objects < 1:
            raise SceneError("M must be >= 1")
        if set(self.true_goal) != objs or set(self.initial_footprint) != objs:
            raise SceneError("true_goal / initial_footprint must cover objects 1..M")
        if set(self.goal_footprint) != goals:
            raise SceneError("goal_footprint must cover goals 1..N")
        assigned = [g for g in self.true_goal.values() if g is not None]
        if sorted(assigned) != sorted(goals):
            raise SceneError("true_goal restricted to goal objects must be a bijection onto 1..N")
        for name, fps in (("goal", self.goal_footprint), ("initial", self.initial_footprint)):
            seen: set[int] = set()
            for k in sorted(fps):
                fp = fps[k]
                if not fp:
                    raise SceneError(f"empty {name} footprint for {k}")
                if not fp <= self.cell_universe:
                    raise SceneError(f"{name} footprint {k} leaves the cell universe")
                if seen & fp:
                    raise SceneError(f"{name} footprints overlap at {k}")
                seen |= fp

    @property
    def objects(self) -> range:
        return range(1, self.num_objects + 1)

    @property
    def goal_objects(self) -> list[int]:
        return [i for i in self.objects if self.true_goal[i] is not None]

    @property
    def nongoal_objects(self) -> list[int]:
        return [i for i in self.objects if self.true_goal[i] is None]

    def owner(self, j: int) -> int:
        for i in self.objects:
            if self.true_goal[i] == j:
                return i
        raise KeyError(j)

    def initial_state(self) -> "SceneState":
        return SceneState(
            location={i: Location.placed(self.initial_footprint[i]) for i in self.objects},
            step_count=0,
            moves={i: 0 for i in self.objects},
        )


@dataclass(frozen=True)
class SceneState:
    location: Mapping[int, Location]
    step_count: int = 0
    # number of completed placements per object; keys the object's current pose
    moves: Mapping[int, int] = field(default_factory=dict)

    def kind(self, i: int) -> LocKind:
        return self.location[i].kind

    def in_hand(self) -> int | None:
        held = [i for i, loc in self.location.items() if loc.kind is LocKind.HAND]
        return held[0] if held else None

    def visible(self) -> list[int]:
        """Objects on the table or in the buffer."""
        return sorted(
            i for i, loc in self.location.items() if loc.kind in (LocKind.PLACED, LocKind.BUFFER)
        )

    def occupants(self, cells: frozenset, exclude: int | None = None) -> list[int]:
        return sorted(
            i
            for i, loc in self.location.items()
            if loc.kind is LocKind.PLACED and i != exclude and loc.cells & cells
        )

    def check_invariants(self) -> None:
        if sum(loc.kind is LocKind.HAND for loc in self.location.values()) > 1:
            raise SceneError("more than one object in hand")
        seen: set[int] = set()
        for i in sorted(self.location):
            loc = self.location[i]
            if loc.kind is LocKind.PLACED:
                if seen & loc.cells:
                    raise SceneError(f"placed footprints overlap at object {i}")
                seen |= loc.cells
            elif loc.cells:
                raise SceneError(f"object {i} off the table but occupies cells")


def goal_is_free(spec: SceneSpec, state: SceneState, j: int, exclude: int | None = None) -> bool:
    return not state.occupants(spec.goal_footprint[j], exclude=exclude)


def is_at_goal(
    spec: SceneSpec,
    state: SceneState,
    i: int,
    assignment: Mapping[int, int | None] | None = None,
) -> bool:
    """True iff object ``i`` is placed exactly on the footprint of its goal.

    ``assignment`` overrides the ground-truth goal (used with estimated matchings).
    """
    loc = state.location[i]
    if loc.kind is not LocKind.PLACED:
        return False
    goal = spec.true_goal[i] if assignment is None else assignment.get(i)
    if goal is None:
        return False
    return loc.cells == spec.goal_footprint[goal]


def apply_grasp(state: SceneState, i: int) -> SceneState:
    if state.in_hand() is not None:
        raise PlacementError(f"cannot grasp {i}: hand already holds {state.in_hand()}")
    if state.kind(i) not in (LocKind.PLACED, LocKind.BUFFER):
        raise PlacementError(f"object {i} is not graspable ({state.kind(i).value})")
    location = dict(state.location)
    location[i] = IN_HAND
    return replace(state, location=location)


def charge_step(state: SceneState) -> SceneState:
    """Consume one planning step without changing occupancy (failed grasp)."""
    return replace(state, step_count=state.step_count + 1)


def apply_place(spec: SceneSpec, state: SceneState, i: int, target: PlaceTarget) -> SceneState:
    if state.kind(i) is not LocKind.HAND:
        raise PlacementError(f"object {i} is not in hand")
    if target.kind == "goal":
        j = target.goal
        if j not in spec.goal_footprint:
            raise PlacementError(f"no goal {j}")
        blockers = state.occupants(spec.goal_footprint[j], exclude=i)
        if blockers:
            raise PlacementError(f"goal {j} is occupied by {blockers}")
        new_loc = Location.placed(spec.goal_footprint[j])
    elif target.kind == "buffer":
        new_loc = IN_BUFFER
    else:
        new_loc = OUTSIDE
    location = dict(state.location)
    location[i] = new_loc
    moves = dict(state.moves)
    moves[i] = moves.get(i, 0) + 1
    return SceneState(location=location, step_count=state.step_count + 1, moves=moves)


def _goal_cells(j: int) -> frozenset:
    base = GOAL_WIDTH * (j - 1)
    return frozenset(range(base, base + GOAL_WIDTH))


def generate_scene(params: ScenarioParams) -> SceneSpec:
    """Build a scene with exactly the requested goal-occupancy cycle structure.

    Objects in a cycle sit on the goal of the next cycle member. Remaining goal
    objects either sit on their goal (``fraction_at_goal``), on a later object's
    goal (``p_chain``, acyclic by construction) or on a free slot.
    """
    params.validate()
    rng = np.random.default_rng(params.rng_seed)
    n_goal = params.num_goal_objects
    n_obj = n_goal + params.num_nongoal_objects

    ids = [int(x) + 1 for x in rng.permutation(n_obj)]
    goal_objs, nongoal_objs = ids[:n_goal], ids[n_goal:]
    goal_ids = [int(x) + 1 for x in rng.permutation(n_goal)]
    true_goal: dict[int, int | None] = {o: g for o, g in zip(goal_objs, goal_ids)}
    true_goal.update({o: None for o in nongoal_objs})
    goal_fp = {j: _goal_cells(j) for j in range(1, n_goal + 1)}

    initial: dict[int, frozenset] = {}
    next_slot = 0

    def free_slot() -> frozenset:
        nonlocal next_slot
        base = GOAL_WIDTH * (n_goal + next_slot)
        next_slot += 1
        return frozenset(range(base, base + GOAL_WIDTH))

    pos = 0
    for length in params.cycle_type:
        members = goal_objs[pos : pos + length]
        pos += length
        for t, o in enumerate(members):
            initial[o] = goal_fp[true_goal[members[(t + 1) % length]]]

    rest = goal_objs[pos:]
    n_at = int(math.floor(params.fraction_at_goal * len(rest) + 0.5))
    for o in rest[:n_at]:
        initial[o] = goal_fp[true_goal[o]]

    free_role = rest[n_at:]
    hosted: set[int] = set()
    for k, o in enumerate(free_role):
        later = [true_goal[x] for x in free_role[k + 1 :] if true_goal[x] not in hosted]
        if later and rng.random() < params.p_chain:
            g = later[int(rng.integers(len(later)))]
            hosted.add(g)
            initial[o] = goal_fp[g]
        else:
            initial[o] = free_slot()

    for o in nongoal_objs:
        open_goals = [true_goal[x] for x in free_role if true_goal[x] not in hosted]
        if open_goals and rng.random() < params.p_nongoal_on_goal:
            g = open_goals[int(rng.integers(len(open_goals)))]
            hosted.add(g)
            initial[o] = goal_fp[g]
        else:
            initial[o] = free_slot()

    universe = frozenset(range(GOAL_WIDTH * (n_goal + next_slot)))
    return SceneSpec(
        num_objects=n_obj,
        num_goals=n_goal,
        true_goal=dict(sorted(true_goal.items())),
        initial_footprint=dict(sorted(initial.items())),
        goal_footprint=goal_fp,
        cell_universe=universe,
        params=params,
    )


def random_params(rng: np.random.Generator, max_objects: int = 6, min_objects: int = 2) -> ScenarioParams:
    """Draw scenario parameters covering cycles, chains, at-goal and non-goal objects.

    At least two goal objects are drawn: matching over a single goal is degenerate.
    """
    if max_objects < 2:
        raise SceneError("random scenes need at least two objects")
    n_obj = int(rng.integers(max(2, min_objects), max_objects + 1))
    n_goal = int(rng.integers(max(2, n_obj // 2), n_obj + 1))
    cycles: list[int] = []
    budget = n_goal
    while budget >= 2 and rng.random() < 0.6:
        length = int(rng.integers(2, budget + 1))
        cycles.append(length)
        budget -= length
    return ScenarioParams(
        num_goal_objects=n_goal,
        num_nongoal_objects=n_obj - n_goal,
        cycle_type=tuple(cycles),
        fraction_at_goal=float(rng.choice([0.0, 0.25, 0.5])),
        rng_seed=int(rng.integers(2**31)),
        p_chain=float(rng.choice([0.0, 0.5, 1.0])),
        p_nongoal_on_goal=float(rng.choice([0.0, 0.5, 1.0])),
    )
