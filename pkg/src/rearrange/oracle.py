"""Breadth-first search over the full pick-and-place action space (ideal perception).

Independent of the dependency-graph machinery: it only knows footprints,
goal regions, the buffer and the outside bin.
"""
from __future__ import annotations

from collections import deque

from .scene import SceneSpec

BFS_CAP = 6

_BUFFER = -1
_OUTSIDE = -2


class StateSpaceError(ValueError):
    """Scene too large for exhaustive search."""


def brute_force_min_steps(spec: SceneSpec, cap: int = BFS_CAP) -> int:
    """Minimum number of pick-and-place actions that completes the scene.

    A location code is 0 (initial footprint), a goal index, buffer or outside.
    Goal objects are never sent outside: the bin is irreversible and such a
    state can no longer complete, so pruning it does not change the optimum.
    """
    if spec.num_objects > cap:
        raise StateSpaceError(f"{spec.num_objects} objects exceed the search cap of {cap}")
    objs = list(spec.objects)
    goal_of = [spec.true_goal[i] for i in objs]
    goal_cells = spec.goal_footprint
    init_cells = [spec.initial_footprint[i] for i in objs]

    def normalise(code: int, k: int) -> int:
        if code == 0:
            for j, cells in goal_cells.items():
                if cells == init_cells[k]:
                    return j
        return code

    def cells(code: int, k: int) -> frozenset:
        if code == 0:
            return init_cells[k]
        if code > 0:
            return goal_cells[code]
        return frozenset()

    def done(state: tuple[int, ...]) -> bool:
        return all(
            (c == _OUTSIDE) if g is None else (c == g) for c, g in zip(state, goal_of)
        )

    start = tuple(normalise(0, k) for k in range(len(objs)))
    if done(start):
        return 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        d = dist[state]
        for k, code in enumerate(state):
            if code == _OUTSIDE:
                continue
            others = frozenset().union(*(cells(c, m) for m, c in enumerate(state) if m != k))
            targets = [j for j, gc in goal_cells.items() if not gc & others]
            targets.append(_BUFFER)
            if goal_of[k] is None:
                targets.append(_OUTSIDE)
            for t in targets:
                if t == code:
                    continue
                nxt = state[:k] + (t,) + state[k + 1 :]
                if nxt in dist:
                    continue
                if done(nxt):
                    return d + 1
                dist[nxt] = d + 1
                queue.append(nxt)
    raise RuntimeError("scene cannot be completed")
