"""Pre-crash scenario families on a synthetic map, plus scripted traffic.

Map: a four-way intersection at the origin with two lanes per direction
(inner lanes 1.75 m and outer lanes 5.25 m from the center line), stop lines
8 m from the center and 10 m tall corner buildings; and a separate straight
two-lane road along y = -300 for overtaking.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .lidar import raw_returns
from .perception import DetectorConfig
from .policy.route import Route, arc, line, polyline
from .protocol.selection import build_selection_scope
from .world import (DT, ControlSignal, Goal, LightPhase, OrientedBox, Pose2D, Role,
                    TrafficLight, VehicleState, WorldState)

LANE_WIDTH = 3.5
INNER = 1.75
OUTER = 5.25
BOX_HALF = 7.0
STOP_LINE = 8.0
BUILDING_EDGE = 12.0
BUILDING_SIZE = 60.0
BUILDING_HEIGHT = 10.0
ROAD_Y = -300.0

CAR = (4.5, 1.9, 1.6)
TRUCK = (10.0, 2.5, 3.5)

COLLIDER_SPEEDS = (6.0, 8.0, 10.0)
COLLIDER_DISTANCES = (25.0, 35.0, 45.0)
EGO_SPEEDS = (5.0, 7.0, 9.0)
N_CONFIGS = 27
DEFAULT_BACKGROUND = 30
# goal coordinate along the exit direction, well past the conflict zone
GOAL_AHEAD = {"Overtaking": 32.0, "LeftTurn": 22.0, "RedLightViolation": 26.0}
EGO_LANE_CLEAR = 50.0  # m of the ego's lane behind it kept free of moving traffic

EGO_ID, TRUCK_ID, COLLIDER_ID = 0, 1, 2


class Family(str, Enum):
    OVERTAKING = "Overtaking"
    LEFT_TURN = "LeftTurn"
    RED_LIGHT = "RedLightViolation"


FAMILIES = tuple(Family)


class ScenarioError(RuntimeError):
    """Construction failed, which points at bad geometry constants."""


def lattice(config_index: int) -> tuple[float, float, float]:
    """(collider speed, collider distance to the conflict point, ego target speed)."""
    if not 0 <= config_index < N_CONFIGS:
        raise ValueError(f"config_index must be in 0..26, got {config_index}")
    i_speed, rest = divmod(config_index, 9)
    i_dist, i_ego = divmod(rest, 3)
    return COLLIDER_SPEEDS[i_speed], COLLIDER_DISTANCES[i_dist], EGO_SPEEDS[i_ego]


@dataclass(frozen=True)
class ScenarioConfig:
    family: Family
    config_index: int
    seed: int = 0
    collider_offset: Optional[float] = None  # m to the conflict point; lattice value when None
    collider_speed: Optional[float] = None
    ego_speed: Optional[float] = None
    truck_pose: Optional[Pose2D] = None
    background_count: int = DEFAULT_BACKGROUND
    include_truck: bool = True
    include_collider: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        lattice(self.config_index)
        if self.background_count < 0:
            raise ValueError("background_count must be >= 0")
        v_c, d, v_e = lattice(self.config_index)
        if self.collider_speed is None:
            object.__setattr__(self, "collider_speed", v_c)
        if self.collider_offset is None:
            object.__setattr__(self, "collider_offset", d)
        if self.ego_speed is None:
            object.__setattr__(self, "ego_speed", v_e)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        if self.truck_pose is not None:
            p = self.truck_pose
            d["truck_pose"] = {"x": p.x, "y": p.y, "heading": p.heading}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if d.get("truck_pose") is not None:
            d["truck_pose"] = Pose2D(**d["truck_pose"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Lane:
    """Straight one-way lane; ``u`` is the coordinate along travel, 0 at the intersection center."""

    name: str
    origin: tuple[float, float]
    heading: float
    axis: Optional[str] = None  # signal axis, None off the intersection

    def pose(self, u: float) -> Pose2D:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Pose2D(self.origin[0] + c * u, self.origin[1] + s * u, self.heading)


INTERSECTION_LANES = {
    "NB_inner": Lane("NB_inner", (INNER, 0.0), math.pi / 2, "NS"),
    "NB_outer": Lane("NB_outer", (OUTER, 0.0), math.pi / 2, "NS"),
    "SB_inner": Lane("SB_inner", (-INNER, 0.0), -math.pi / 2, "NS"),
    "SB_outer": Lane("SB_outer", (-OUTER, 0.0), -math.pi / 2, "NS"),
    "EB_inner": Lane("EB_inner", (0.0, -INNER), 0.0, "EW"),
    "EB_outer": Lane("EB_outer", (0.0, -OUTER), 0.0, "EW"),
    "WB_inner": Lane("WB_inner", (0.0, INNER), math.pi, "EW"),
    "WB_outer": Lane("WB_outer", (0.0, OUTER), math.pi, "EW"),
}
ROAD_EB = Lane("road_EB", (0.0, ROAD_Y - INNER), 0.0)
ROAD_WB = Lane("road_WB", (0.0, ROAD_Y + INNER), math.pi)

# lanes that cross the ego route or carry the collider stay empty
EXCLUDED_LANES = {
    Family.LEFT_TURN: {"SB_inner", "SB_outer"},
    Family.RED_LIGHT: {"EB_outer"},
}


def buildings() -> tuple[OrientedBox, ...]:
    c = BUILDING_EDGE + BUILDING_SIZE / 2
    return tuple(OrientedBox(Pose2D(sx * c, sy * c, 0.0), BUILDING_SIZE, BUILDING_SIZE,
                             BUILDING_HEIGHT)
                 for sx in (1, -1) for sy in (1, -1))


def signal_plan() -> tuple[TrafficLight, ...]:
    """North-south green and east-west red for longer than any episode."""
    return (TrafficLight(0, "NS", LightPhase.GREEN, 0.0, green=90.0, yellow=3.0, red=30.0),
            TrafficLight(0, "EW", LightPhase.RED, 0.0, green=30.0, yellow=3.0, red=93.0))


def make_vehicle(vid: int, pose: Pose2D, dims, speed: float, role: Role,
                 comm: bool = True) -> VehicleState:
    return VehicleState(vid, OrientedBox(pose, *dims), speed, 0.0, role, comm)


@dataclass(frozen=True)
class Layout:
    ego: Pose2D
    truck: Pose2D
    collider: Pose2D
    route: Route
    goal: Goal
    conflict: tuple[float, float]


def _cosine_shift(x0: float, x1: float, y0: float, y1: float, n: int = 40) -> np.ndarray:
    x = np.linspace(x0, x1, n)
    return np.stack([x, y0 + (y1 - y0) * (1 - np.cos(np.pi * (x - x0) / (x1 - x0))) / 2], axis=1)


def _exposure(route: Route, inside) -> tuple[tuple[float, float], ...]:
    """Arc-length span of route points for which ``inside(x, y)`` holds."""
    mask = np.array([inside(x, y) for x, y in route.points])
    if not mask.any():
        return ()
    idx = np.nonzero(mask)[0]
    return ((float(route.s[idx[0]]), float(route.s[idx[-1]])),)


def layout(family: Family, d: float) -> Layout:
    """Ego, truck and collider placement with the collider ``d`` meters from the conflict point."""
    if family is Family.OVERTAKING:
        lane_eb, lane_wb = ROAD_Y - INNER, ROAD_Y + INNER
        ego = Pose2D(-18.0, lane_eb, 0.0)
        truck = Pose2D(0.0, lane_eb + 0.25, 0.0)  # a little toward the center line
        collider = Pose2D(d, lane_wb, math.pi)
        pts = polyline(line(-18.0, lane_eb, -17.0, lane_eb),
                       _cosine_shift(-17.0, -7.0, lane_eb, lane_wb),
                       line(-7.0, lane_wb, 9.0, lane_wb),
                       _cosine_shift(9.0, 19.0, lane_wb, lane_eb),
                       line(19.0, lane_eb, 70.0, lane_eb))
        route = Route(pts)
        route = Route(pts, _exposure(route, lambda x, y: y > lane_eb + 0.05))
        goal = Goal(Pose2D(GOAL_AHEAD["Overtaking"], lane_eb, 0.0))
        return Layout(ego, truck, collider, route, goal, (0.0, lane_wb))
    ego_y = -STOP_LINE - CAR[0] / 2
    if family is Family.LEFT_TURN:
        ego = Pose2D(INNER, ego_y, math.pi / 2)
        truck = Pose2D(-INNER, STOP_LINE + TRUCK[0] / 2, -math.pi / 2)
        r = BOX_HALF + INNER
        cos_t = (BOX_HALF - OUTER) / r
        conflict = (-OUTER, -BOX_HALF + r * math.sqrt(1 - cos_t ** 2))
        collider = Pose2D(-OUTER, conflict[1] + d, -math.pi / 2)
        pts = polyline(line(INNER, ego_y, INNER, -BOX_HALF),
                       arc(-BOX_HALF, -BOX_HALF, r, 0.0, math.pi / 2),
                       line(-BOX_HALF, INNER, -60.0, INNER))
        route = Route(pts)
        route = Route(pts, _exposure(route, lambda x, y: -BOX_HALF - 2.5 <= x <= 2.5
                                     and y > -BOX_HALF))
        goal = Goal(Pose2D(-GOAL_AHEAD["LeftTurn"], INNER, math.pi))
        return Layout(ego, truck, collider, route, goal, conflict)
    if family is Family.RED_LIGHT:
        ego = Pose2D(OUTER, ego_y, math.pi / 2)
        truck = Pose2D(INNER, -STOP_LINE - TRUCK[0] / 2, math.pi / 2)
        conflict = (OUTER, -OUTER)
        collider = Pose2D(OUTER - d, -OUTER, 0.0)
        pts = polyline(line(OUTER, ego_y, OUTER, 70.0))
        route = Route(pts)
        route = Route(pts, _exposure(route, lambda x, y: -BOX_HALF - 2.5 <= y <= BOX_HALF + 2.5))
        goal = Goal(Pose2D(OUTER, GOAL_AHEAD["RedLightViolation"], math.pi / 2))
        return Layout(ego, truck, collider, route, goal, conflict)
    raise ValueError(family)


def _on_lane(lane: Lane, pose: Pose2D) -> Optional[float]:
    """``u`` of ``pose`` along ``lane`` if it sits on the lane centerline, else None."""
    c, s = math.cos(lane.heading), math.sin(lane.heading)
    dx, dy = pose.x - lane.origin[0], pose.y - lane.origin[1]
    if abs(-s * dx + c * dy) > 0.1 or abs(math.cos(pose.heading - lane.heading) - 1.0) > 1e-6:
        return None
    return c * dx + s * dy


def _lane_slots(family: Family, lay: Layout) -> list[tuple[Lane, float, bool]]:
    """Candidate (lane, u, queued) spawn slots; queued slots start at rest.

    Behind the ego the first two slots are a stationary queue and moving
    traffic starts at least EGO_LANE_CLEAR meters back, so nothing rear-ends
    an ego that waits at its start.
    """
    slots = []
    lanes = [ROAD_EB] if family is Family.OVERTAKING else [
        lane for name, lane in INTERSECTION_LANES.items() if name not in EXCLUDED_LANES[family]]
    lights = {lt.axis: lt for lt in signal_plan()}
    for lane in lanes:
        ego_u = _on_lane(lane, lay.ego)
        red = lane.axis is not None and lights[lane.axis].phase is not LightPhase.GREEN
        if family is Family.OVERTAKING:
            grid = np.arange(-220.0, 250.0, 10.0)
        else:
            grid = np.arange(-140.0, 141.0, 10.0)
        for u in grid:
            u = float(u)
            if family is Family.OVERTAKING:
                if ego_u - EGO_LANE_CLEAR < u < lay.truck.x + 12.0:
                    continue  # behind the ego, the ego, the truck and the gap to it
            else:
                if -STOP_LINE - 2.5 < u < BOX_HALF + 5.0:
                    continue  # inside or right at the box
                if red and u < 0:
                    continue  # filled by the queue and far slots below
                if ego_u is not None and ego_u - EGO_LANE_CLEAR < u < ego_u:
                    continue
            slots.append((lane, u, False))
        if ego_u is not None:
            for k in (1, 2):
                slots.append((lane, ego_u - 7.0 * k, True))
        if red:
            for k in range(4):
                slots.append((lane, -STOP_LINE - CAR[0] / 2 - 0.5 - 7.0 * k, True))
            for u in np.arange(-140.0, -49.0, 10.0):
                slots.append((lane, float(u), False))
    return slots


def _clear_of(pose: Pose2D, others: list[VehicleState], gap: float = 3.0) -> bool:
    for v in others:
        if math.hypot(pose.x - v.pose.x, pose.y - v.pose.y) < v.box.length / 2 + CAR[0] / 2 + gap:
            return False
    return True


def background(family: Family, lay: Layout, count: int, seed: int, config_index: int,
               fixed: list[VehicleState], first_id: int) -> list[VehicleState]:
    rng = np.random.default_rng([seed, FAMILIES.index(family), config_index, 17])
    slots = _lane_slots(family, lay)
    order = rng.permutation(len(slots))
    out: list[VehicleState] = []
    for k in order:
        if len(out) == count:
            break
        lane, u, queued = slots[int(k)]
        pose = lane.pose(u)
        if not _clear_of(pose, fixed + out):
            continue
        speed = 0.0 if queued else float(rng.uniform(6.0, 9.0))
        out.append(make_vehicle(first_id + len(out), pose, CAR, speed, Role.BACKGROUND))
    if len(out) < count:
        raise ScenarioError(f"only {len(out)} of {count} background slots fit")
    return out


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    world: WorldState
    route: Route
    goal: Goal
    target_speed: float
    cruise: dict  # background vehicle id -> desired speed
    conflict: tuple[float, float]

    def __iter__(self):
        return iter((self.world, self.route, self.goal))


def occluded(world: WorldState, viewer: int, target: int) -> bool:
    _, ids = raw_returns(world, viewer)
    return not np.any(ids == target)


def collider_hits(world: WorldState, viewer: int, target: int = COLLIDER_ID) -> int:
    _, ids = raw_returns(world, viewer)
    return int(np.count_nonzero(ids == target))


def build_world(config: ScenarioConfig, certify: bool = True) -> Scenario:
    """Place ego, truck, collider and background; certify the occlusion premise.

    The certificate requires zero collider returns in the ego's t = 0 scan and
    at least ``hit_min`` in the scan of some member of the 6-vehicle
    selection scope. It is skipped when the truck or collider is left out.
    """
    family = config.family
    lay = layout(family, config.collider_offset)
    ego = make_vehicle(EGO_ID, lay.ego, CAR, 0.0, Role.EGO)
    fixed = [ego]
    if config.include_truck:
        pose = config.truck_pose or lay.truck
        fixed.append(make_vehicle(TRUCK_ID, pose, TRUCK, 0.0, Role.OCCLUDER))
    if config.include_collider:
        fixed.append(make_vehicle(COLLIDER_ID, lay.collider, CAR, config.collider_speed,
                                  Role.COLLIDER, comm=False))
    bg = background(family, lay, config.background_count, config.seed, config.config_index,
                    fixed, COLLIDER_ID + 1)
    intersection = family is not Family.OVERTAKING
    world = WorldState(0, DT, tuple(fixed + bg), buildings() if intersection else (),
                       signal_plan() if intersection else ())
    cruise = {v.id: (v.speed if v.speed > 0 else 7.0) for v in bg}
    scen = Scenario(config, world, lay.route, lay.goal, config.ego_speed, cruise, lay.conflict)
    if certify and config.include_truck and config.include_collider:
        certify_occlusion(scen)
    return scen


def certify_occlusion(scen: Scenario, n_s: int = 6) -> int:
    """Raise ScenarioError unless the collider is hidden from the ego but seen by the scope.

    Returns the id of the best-placed witness.
    """
    world = scen.world
    if collider_hits(world, EGO_ID) != 0:
        raise ScenarioError(f"{scen.config.family.value} #{scen.config.config_index}: "
                            "ego sees the collider at t = 0")
    scope = build_selection_scope(world, EGO_ID, n_s)
    hits = {m: collider_hits(world, m) for m in scope.members}
    best = max(hits, key=lambda m: (hits[m], -m)) if hits else None
    if best is None or hits[best] < DetectorConfig().hit_min:
        raise ScenarioError(f"{scen.config.family.value} #{scen.config.config_index}: "
                            "no scope member sees the collider")
    return best


# ---- scripted traffic --------------------------------------------------------

IDM_ACCEL = 2.0
IDM_DECEL = 3.0
IDM_GAP = 2.0
IDM_HEADWAY = 1.2
LOOKAHEAD = 60.0


def _idm(v, v0, gap, dv):
    """IDM acceleration; works elementwise on arrays, ``gap`` may be inf."""
    s_star = np.maximum(IDM_GAP + v * IDM_HEADWAY + v * dv / (2 * math.sqrt(IDM_ACCEL * IDM_DECEL)),
                        0.0)
    free = 1 - (v / np.maximum(v0, 0.1)) ** 4
    inter = np.where(np.isinf(gap), 0.0, (s_star / np.maximum(gap, 0.1)) ** 2)
    return IDM_ACCEL * (free - inter)


def background_controls(world: WorldState, cruise: dict) -> dict[int, ControlSignal]:
    """Lane keeping with car following on anything ahead and stopping for non-green signals."""
    vs = world.vehicles
    a = world.box_arrays
    n = len(vs)
    rows = np.array([i for i, v in enumerate(vs) if v.id in cruise], dtype=np.int64)
    if rows.size == 0:
        return {}
    xs, ys, hd, sp = a["x"][:n], a["y"][:n], a["heading"][:n], a["speed"][:n]
    half = a["half_length"][:n]
    c, s = np.cos(hd[rows]), np.sin(hd[rows])
    dx = xs[None, :] - xs[rows, None]
    dy = ys[None, :] - ys[rows, None]
    lon = c[:, None] * dx + s[:, None] * dy
    lat = -s[:, None] * dx + c[:, None] * dy
    ahead = (lon > 0) & (lon < LOOKAHEAD) & (np.abs(lat) < 2.2)
    ahead[np.arange(rows.size), rows] = False
    gaps = np.where(ahead, lon - half[None, :] - half[rows, None], np.inf)
    lead = np.argmin(gaps, axis=1)
    gap = gaps[np.arange(rows.size), lead]
    lead_v = sp[lead] * np.cos(hd[lead] - hd[rows])
    dv = np.where(np.isfinite(gap), sp[rows] - lead_v, 0.0)
    if world.lights:
        ns = world.light(0, "NS")
        ew = world.light(0, "EW")
        is_ns = np.abs(s) > np.abs(c)
        red = np.array([lt is not None and lt.phase is not LightPhase.GREEN
                        for lt in (ns, ew)])
        stop = np.where(is_ns, red[0], red[1])
        to_line = -STOP_LINE - (c * xs[rows] + s * ys[rows] + half[rows])
        line = stop & (to_line >= 0.0) & (to_line < LOOKAHEAD) & (to_line < gap)
        gap = np.where(line, to_line, gap)
        dv = np.where(line, sp[rows], dv)
    v0 = np.array([cruise[vs[i].id] for i in rows])
    acc = _idm(sp[rows], v0, gap, dv)
    out = {}
    for i, ai in zip(rows, acc):
        if ai >= 0:
            out[vs[i].id] = ControlSignal(min(1.0, ai / 3.0), 0.0, 0.0)
        else:
            out[vs[i].id] = ControlSignal(0.0, min(1.0, -ai / 6.0), 0.0)
    return out


def stop_distance(world: WorldState, v: VehicleState) -> float:
    """How far a background vehicle will drive before it halts at a non-green stop line.

    Infinite for anything that does not stop: vehicles already past the line,
    green approaches, and the collider, which ignores signals.
    """
    if v.role is not Role.BACKGROUND or not world.lights:
        return math.inf
    c, s = math.cos(v.pose.heading), math.sin(v.pose.heading)
    lt = world.light(0, "NS" if abs(s) > abs(c) else "EW")
    if lt is None or lt.phase is LightPhase.GREEN:
        return math.inf
    to_line = -STOP_LINE - (c * v.pose.x + s * v.pose.y + v.box.length / 2)
    return to_line if to_line >= 0.0 else math.inf


def collider_policy(world: WorldState, family: Family | str) -> ControlSignal:
    """Constant speed along a straight lane, ignoring signals and other traffic."""
    Family(family)
    return ControlSignal(0.0, 0.0, 0.0)


def fig1_world(seed: int = 0) -> tuple[WorldState, int]:
    """Four candidate partners; only the truck (the returned id) sees the hidden collider."""
    lay = layout(Family.LEFT_TURN, 30.0)
    vs = [make_vehicle(EGO_ID, lay.ego, CAR, 0.0, Role.EGO),
          make_vehicle(TRUCK_ID, lay.truck, TRUCK, 0.0, Role.OCCLUDER),
          make_vehicle(COLLIDER_ID, lay.collider, CAR, 8.0, Role.COLLIDER, comm=False)]
    nb = INTERSECTION_LANES["NB_inner"], INTERSECTION_LANES["NB_outer"]
    for vid, (lane, u) in enumerate([(nb[0], -18.0), (nb[1], -11.0), (nb[1], -19.0)], start=3):
        vs.append(make_vehicle(vid, lane.pose(u), CAR, 0.0, Role.BACKGROUND))
    return WorldState(0, DT, tuple(vs), buildings(), signal_plan()), TRUCK_ID


def with_truck_removed(config: ScenarioConfig) -> ScenarioConfig:
    return replace(config, include_truck=False)
