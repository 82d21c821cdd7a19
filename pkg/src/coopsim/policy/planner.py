"""Space-time A* on an integer grid with wait moves."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional

from ..world import Pose2D

Cell = tuple[int, int]
SQRT2 = math.sqrt(2.0)
MOVES = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]  # includes (0, 0) = wait


@dataclass(frozen=True)
class SpaceTimePlan:
    cells: tuple[tuple[int, int, int], ...]  # (x, y, t)
    resolution: float = 1.0  # meters per cell
    step: float = 0.5  # seconds per timestep

    def __post_init__(self):
        for (x0, y0, t0), (x1, y1, t1) in zip(self.cells, self.cells[1:]):
            if t1 != t0 + 1 or max(abs(x1 - x0), abs(y1 - y0)) > 1:
                raise ValueError("plan cells must be 8-adjacent or equal, one timestep apart")

    @property
    def arrival(self) -> int:
        return self.cells[-1][2]

    @property
    def cost(self) -> float:
        total = 0.0
        for (x0, y0, _), (x1, y1, _) in zip(self.cells, self.cells[1:]):
            total += _move_cost(x1 - x0, y1 - y0)
        return total

    def position(self, t: int) -> Cell:
        """Cell occupied at timestep ``t`` (the goal is held after arrival)."""
        t0 = self.cells[0][2]
        x, y, _ = self.cells[min(max(t - t0, 0), len(self.cells) - 1)]
        return (x, y)


def _move_cost(dx: int, dy: int) -> float:
    if dx and dy:
        return SQRT2
    return 1.0 if (dx or dy) else 0.0


def octile(a: Cell, b: Cell) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def chebyshev(a: Cell, b: Cell) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def _as_cell(p, resolution: float) -> Cell:
    if isinstance(p, Pose2D):
        return (int(round(p.x / resolution)), int(round(p.y / resolution)))
    return (int(p[0]), int(p[1]))


def plan_astar(start, goal, occupancy: Callable[[Cell, int], bool], horizon: int,
               shape: Optional[tuple[int, int]] = None, resolution: float = 1.0,
               step: float = 0.5) -> Optional[SpaceTimePlan]:
    """Earliest-arrival space-time path from ``start`` to ``goal``.

    Every move takes one timestep; moves go to any 8-neighbour or stay put.
    Among earliest-arrival plans the one of least path length is returned
    (straight 1, diagonal sqrt(2), wait 0); remaining ties are broken by the
    lexicographically smallest (x, y, t) frontier state. ``occupancy(cell, t)``
    marks blocked space-time cells. Returns None when the start is blocked at
    t = 0 or no plan arrives within ``horizon`` steps.

    The time heuristic is the Chebyshev distance (one cell per step in any of
    the 8 directions) and the length heuristic is the octile distance; both are
    consistent, so the lexicographic (arrival, length) order is exact.
    """
    s, g = _as_cell(start, resolution), _as_cell(goal, resolution)

    def inside(c: Cell) -> bool:
        return shape is None or (0 <= c[0] < shape[0] and 0 <= c[1] < shape[1])

    if not inside(s) or not inside(g) or occupancy(s, 0):
        return None
    if chebyshev(s, g) > horizon:
        return None
    start_state = (s[0], s[1], 0)
    frontier = [(chebyshev(s, g), octile(s, g), s[0], s[1], 0, 0.0)]
    parent = {start_state: None}
    best_len = {start_state: 0.0}
    closed = set()
    while frontier:
        _, _, x, y, t, length = heapq.heappop(frontier)
        state = (x, y, t)
        if state in closed:
            continue
        closed.add(state)
        if (x, y) == g:
            cells = []
            cur = state
            while cur is not None:
                cells.append(cur)
                cur = parent[cur]
            return SpaceTimePlan(tuple(reversed(cells)), resolution, step)
        if t >= horizon:
            continue
        nt = t + 1
        for dx, dy in MOVES:
            c = (x + dx, y + dy)
            if not inside(c):
                continue
            h = chebyshev(c, g)
            if nt + h > horizon:
                continue
            nstate = (c[0], c[1], nt)
            if nstate in closed:
                continue
            nlen = length + _move_cost(dx, dy)
            if nstate in best_len and best_len[nstate] <= nlen:
                continue
            if occupancy(c, nt):
                continue
            best_len[nstate] = nlen
            parent[nstate] = state
            heapq.heappush(frontier, (nt + h, nlen + octile(c, g), c[0], c[1], nt, nlen))
    return None
