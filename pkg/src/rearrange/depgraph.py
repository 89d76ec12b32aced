"""Dependency digraph over movable objects, membership classes and exact minimum FVS.

An arc ``(a, b)`` means object ``a`` cannot reach its goal until ``b`` moves,
because ``b`` currently overlaps ``a``'s goal region.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

from .scene import LocKind, SceneSpec, SceneState, SceneError, is_at_goal

DEFAULT_FVS_CAP = 30
BRUTEFORCE_CAP = 12


class FvsSizeError(ValueError):
    """Graph too large for the requested exact solver."""


@dataclass(frozen=True)
class DependencyGraph:
    vertices: frozenset
    arcs: frozenset  # of (i0, i1)

    def __post_init__(self):
        for a, b in self.arcs:
            if a == b:
                raise ValueError(f"self-arc on {a}")
            if a not in self.vertices or b not in self.vertices:
                raise ValueError(f"arc {(a, b)} leaves the vertex set")

    @classmethod
    def from_arcs(cls, vertices: Iterable[int], arcs: Iterable[tuple[int, int]]) -> "DependencyGraph":
        return cls(frozenset(vertices), frozenset((int(a), int(b)) for a, b in arcs))

    def successors(self) -> dict[int, set[int]]:
        succ: dict[int, set[int]] = {v: set() for v in self.vertices}
        for a, b in self.arcs:
            succ[a].add(b)
        return succ

    def out_degree(self, v: int) -> int:
        return sum(1 for a, _ in self.arcs if a == v)

    def without(self, removed: Iterable[int]) -> "DependencyGraph":
        removed = set(removed)
        return DependencyGraph(
            self.vertices - removed,
            frozenset((a, b) for a, b in self.arcs if a not in removed and b not in removed),
        )

    def to_edge_list(self) -> str:
        """One ``src dst`` arc per line; a leading comment lists all vertices."""
        lines = ["# vertices: " + " ".join(str(v) for v in sorted(self.vertices))]
        lines += [f"{a} {b}" for a, b in sorted(self.arcs)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text: str) -> "DependencyGraph":
        vertices: set[int] = set()
        arcs = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("vertices:"):
                    vertices.update(int(t) for t in body[len("vertices:"):].split())
                continue
            a, b = (int(t) for t in line.split())
            arcs.append((a, b))
            vertices.update((a, b))
        return cls.from_arcs(vertices, arcs)


@dataclass(frozen=True)
class MembershipSets:
    free: frozenset
    blocked: frozenset
    cyclic: frozenset
    cyclic_closure: frozenset


@dataclass(frozen=True)
class FvsResult:
    members: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.members)


def build_dependency_graph(
    spec: SceneSpec,
    state: SceneState,
    assignment: Mapping[int, int | None],
) -> DependencyGraph:
    """Dependency graph of the movable objects under a (true or estimated) assignment.

    Objects at their assigned goal, outside, or in hand are not vertices.
    Buffered objects are vertices but occupy no cells, so nothing depends on them.
    """
    vertices = []
    for i in state.visible():
        if i not in assignment:
            raise SceneError(f"assignment missing object {i}")
        g = assignment[i]
        if g is not None and g not in spec.goal_footprint:
            raise SceneError(f"object {i} assigned to nonexistent goal {g}")
        if not is_at_goal(spec, state, i, assignment):
            vertices.append(i)
    placed = {
        i: state.location[i].cells for i in vertices if state.location[i].kind is LocKind.PLACED
    }
    arcs = []
    for i0 in vertices:
        g = assignment[i0]
        if g is None:
            continue
        region = spec.goal_footprint[g]
        arcs.extend((i0, i1) for i1, cells in placed.items() if i1 != i0 and cells & region)
    return DependencyGraph.from_arcs(vertices, arcs)


def strongly_connected_components(
    vertices: Iterable[int], succ: Mapping[int, Iterable[int]]
) -> list[list[int]]:
    """Iterative Tarjan; components come out in reverse topological order."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in sorted(vertices):
        if root in index:
            continue
        work = [(root, iter(sorted(succ.get(root, ()))))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(succ.get(w, ())))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def is_acyclic(vertices: Iterable[int], arcs: Iterable[tuple[int, int]]) -> bool:
    """Kahn's algorithm."""
    vertices = set(vertices)
    indeg = {v: 0 for v in vertices}
    succ: dict[int, list[int]] = {v: [] for v in vertices}
    for a, b in arcs:
        if a in vertices and b in vertices:
            succ[a].append(b)
            indeg[b] += 1
    queue = deque(v for v, d in indeg.items() if d == 0)
    seen = 0
    while queue:
        v = queue.popleft()
        seen += 1
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen == len(vertices)


def classify_membership(g: DependencyGraph) -> MembershipSets:
    succ = g.successors()
    free = frozenset(v for v in g.vertices if not succ[v])
    cyclic = frozenset(
        v for comp in strongly_connected_components(g.vertices, succ) if len(comp) > 1 for v in comp
    )
    pred: dict[int, list[int]] = {v: [] for v in g.vertices}
    for a, b in g.arcs:
        pred[b].append(a)
    closure = set(cyclic)
    queue = deque(cyclic)
    while queue:
        v = queue.popleft()
        for u in pred[v]:
            if u not in closure:
                closure.add(u)
                queue.append(u)
    return MembershipSets(
        free=free,
        blocked=frozenset(g.vertices - free),
        cyclic=cyclic,
        cyclic_closure=frozenset(closure),
    )


# --- exact minimum feedback vertex set -------------------------------------------------


def _restrict(succ: Mapping[int, set[int]], keep: set[int]) -> dict[int, set[int]]:
    return {v: succ[v] & keep for v in keep}


def _cyclic_core(succ: Mapping[int, set[int]]) -> list[set[int]]:
    """Non-trivial SCCs; every other vertex lies on no cycle."""
    return [set(c) for c in strongly_connected_components(succ.keys(), succ) if len(c) > 1]


def _shortest_cycle(succ: Mapping[int, set[int]]) -> list[int] | None:
    best: list[int] | None = None
    for s in sorted(succ):
        parent = {s: None}
        queue = deque([s])
        found = None
        while queue and found is None:
            v = queue.popleft()
            for w in sorted(succ[v]):
                if w == s:
                    found = v
                    break
                if w not in parent:
                    parent[w] = v
                    queue.append(w)
        if found is None:
            continue
        cycle = []
        v = found
        while v is not None:
            cycle.append(v)
            v = parent[v]
        if best is None or len(cycle) < len(best):
            best = cycle
            if len(best) == 2:
                break
    return best


def _packing_bound(succ: Mapping[int, set[int]], excluded: set[int]) -> int | None:
    """Greedy vertex-disjoint cycle packing; None if some cycle is fully excluded."""
    remaining = dict(succ)
    bound = 0
    while True:
        cycle = _shortest_cycle(remaining)
        if cycle is None:
            return bound
        if all(v in excluded for v in cycle):
            return None
        bound += 1
        keep = set(remaining) - set(cycle)
        remaining = _restrict(remaining, keep)


def _search(succ: dict[int, set[int]], excluded: set[int], budget: int) -> tuple[int, ...] | None:
    """Lexicographically first FVS of size <= budget avoiding ``excluded``, or None."""
    core: set[int] = set()
    for comp in _cyclic_core(succ):
        core |= comp
    if not core:
        return ()
    succ = _restrict(succ, core)
    excluded = excluded & core
    if not _acyclic_sub(succ, excluded):
        return None
    bound = _packing_bound(succ, excluded)
    if bound is None or bound > budget:
        return None
    v = min(core - excluded)
    rest = _search(_restrict(succ, core - {v}), excluded, budget - 1)
    if rest is not None:
        return (v,) + rest
    return _search(succ, excluded | {v}, budget)


def _acyclic_sub(succ: Mapping[int, set[int]], vs: set[int]) -> bool:
    return is_acyclic(vs, ((a, b) for a in vs for b in succ[a]))


def min_fvs_exact(g: DependencyGraph, cap: int = DEFAULT_FVS_CAP) -> FvsResult:
    """Minimum feedback vertex set by branch and bound.

    Each strongly connected component is solved separately with iterative
    deepening on the set size; branching includes the smallest undecided vertex
    first, so the first solution found is the lexicographically smallest minimum.
    """
    if len(g.vertices) > cap:
        raise FvsSizeError(f"{len(g.vertices)} vertices exceed the exact-FVS cap of {cap}")
    succ = g.successors()
    members: list[int] = []
    for comp in _cyclic_core(succ):
        sub = _restrict(succ, comp)
        k = _packing_bound(sub, set()) or 1
        while True:
            found = _search(sub, set(), k)
            if found is not None:
                members.extend(found)
                break
            k += 1
    return FvsResult(tuple(sorted(members)))


def min_fvs_bruteforce(g: DependencyGraph, cap: int = BRUTEFORCE_CAP) -> FvsResult:
    """Subset enumeration in increasing size, lexicographic within a size."""
    if len(g.vertices) > cap:
        raise FvsSizeError(f"{len(g.vertices)} vertices exceed the brute-force cap of {cap}")
    order = sorted(g.vertices)
    for k in range(len(order) + 1):
        for subset in combinations(order, k):
            removed = set(subset)
            if is_acyclic(g.vertices - removed, g.arcs):
                return FvsResult(subset)
    raise AssertionError("removing every vertex is always acyclic")


def movable_count(spec: SceneSpec, state: SceneState) -> int:
    """Objects not yet in their final place: goal objects off goal, non-goal objects not outside."""
    count = 0
    for i in spec.objects:
        if spec.true_goal[i] is None:
            count += state.kind(i) is not LocKind.OUTSIDE
        else:
            count += not is_at_goal(spec, state, i)
    return count


def optimal_step_lower_bound(spec: SceneSpec, state: SceneState | None = None) -> int:
    """Movable objects plus minimum FVS size of the ground-truth dependency graph."""
    state = spec.initial_state() if state is None else state
    g = build_dependency_graph(spec, state, spec.true_goal)
    return movable_count(spec, state) + min_fvs_exact(g).size
