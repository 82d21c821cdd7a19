"""Selection scope, utility scoring and communication-scope choice."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..world import WorldState
from .messages import Round1Message

MISS_DISTANCE = 0.5
DEFAULT_COMM_RANGE = 100.0


class Strategy(str, Enum):
    SELECTIVE = "Selective"
    RANDOM = "Random"
    ORACLE = "Oracle"
    NOCOMM = "NoComm"


@dataclass(frozen=True)
class SelectionScope:
    ego_id: int
    members: tuple[int, ...]
    degenerate: bool = False  # fewer candidates in range than requested

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class CommScope:
    members: tuple[int, ...]

    def __len__(self):
        return len(self.members)


def _distance(world: WorldState, a: int, b: int) -> float:
    pa, pb = world.vehicle(a).pose, world.vehicle(b).pose
    return math.hypot(pa.x - pb.x, pa.y - pb.y)


def build_selection_scope(world: WorldState, ego: int, n_s: int,
                          comm_range: float = DEFAULT_COMM_RANGE) -> SelectionScope:
    """The ``n_s`` nearest communicating vehicles in range, ties to the lower id."""
    e = world.vehicle(ego).pose
    cands = []
    for v in world.vehicles:
        if v.id == ego or not v.comm_capable:
            continue
        d = math.hypot(v.pose.x - e.x, v.pose.y - e.y)
        if d <= comm_range:
            cands.append((d, v.id))
    cands.sort()
    members = tuple(vid for _, vid in cands[:n_s])
    return SelectionScope(ego, members, degenerate=len(cands) < n_s)


def object_utility(obj_center: Sequence[float], ego_centers: Iterable[Sequence[float]],
                   threshold: float = MISS_DISTANCE) -> int:
    """1 when the object is farther than ``threshold`` from every ego detection."""
    ox, oy = obj_center
    for ex, ey in ego_centers:
        if math.hypot(ox - ex, oy - ey) <= threshold:
            return 0
    return 1


def vehicle_utility(msg: Round1Message | Sequence[Sequence[float]],
                    ego_centers: Sequence[Sequence[float]]) -> int:
    centers = msg.centers if isinstance(msg, Round1Message) else msg
    ego_centers = list(ego_centers)
    return sum(object_utility(c, ego_centers) for c in centers)


def select_comm_scope(scores: Mapping[int, float], n_c: int, world: WorldState, ego: int
                      ) -> CommScope:
    """Top ``n_c`` by utility; ties go to the nearer vehicle, then the lower id."""
    ranked = sorted(scores, key=lambda vid: (-scores[vid], _distance(world, ego, vid), vid))
    return CommScope(tuple(ranked[:max(n_c, 0)]))


def select_random_scope(scope: SelectionScope, n_c: int, rng: np.random.Generator) -> CommScope:
    """Uniform sample of ``n_c`` members without replacement (all of them if fewer)."""
    members = scope.members
    if n_c >= len(members):
        return CommScope(tuple(members))
    keys = rng.random(len(members))
    order = np.argsort(keys, kind="stable")[:max(n_c, 0)]
    return CommScope(tuple(members[i] for i in order))


class StickyRandomSelector:
    """Random partner choice that stays put across ticks.

    Every vehicle gets one uniform key per episode; each tick the ``n_c``
    scope members with the smallest keys are chosen. Per tick this is a
    uniform sample without replacement from the current scope, but a vehicle
    that was passed over is not redrawn on the next frame.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._keys: dict[int, float] = {}

    def key(self, vid: int) -> float:
        if vid not in self._keys:
            self._keys[vid] = float(np.random.default_rng([self.seed, 7919, vid]).random())
        return self._keys[vid]

    def select(self, scope: SelectionScope, n_c: int) -> CommScope:
        ranked = sorted(scope.members, key=lambda vid: (self.key(vid), vid))
        return CommScope(tuple(ranked[:max(n_c, 0)]))
