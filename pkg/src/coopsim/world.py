"""Fixed-timestep world model: kinematics, traffic lights, collisions, outcomes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

DT = 0.1
ACCEL_MAX = 3.0  # m/s^2 at full throttle
DECEL_MAX = 6.0  # m/s^2 at full brake
STEER_MAX = math.radians(35.0)
WHEELBASE = 2.8

DEFAULT_TIME_LIMIT = 60.0


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.pi - math.fmod(math.pi - a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    elif w > math.pi:
        w -= 2.0 * math.pi
    return w


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_local(self, x: float, y: float) -> tuple[float, float]:
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx, dy = x - self.x, y - self.y
        return (c * dx + s * dy, -s * dx + c * dy)

    def to_world(self, lx: float, ly: float) -> tuple[float, float]:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return (self.x + c * lx - s * ly, self.y + s * lx + c * ly)


@dataclass(frozen=True)
class OrientedBox:
    center: Pose2D
    length: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.length >= self.width > 0 and self.height > 0):
            raise ValueError(
                f"invalid box dims length={self.length} width={self.width} height={self.height}"
            )

    def corners(self) -> np.ndarray:
        hl, hw = self.length / 2.0, self.width / 2.0
        c, s = math.cos(self.center.heading), math.sin(self.center.heading)
        local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.center.x, self.center.y])

    @property
    def radius(self) -> float:
        return math.hypot(self.length, self.width) / 2.0

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        lx, ly = self.center.to_local(x, y)
        return abs(lx) <= self.length / 2.0 + tol and abs(ly) <= self.width / 2.0 + tol

    def moved(self, pose: Pose2D) -> "OrientedBox":
        return replace(self, center=pose)


class Role(str, Enum):
    EGO = "Ego"
    OCCLUDER = "Occluder"
    COLLIDER = "Collider"
    BACKGROUND = "Background"


@dataclass(frozen=True)
class VehicleState:
    id: int
    box: OrientedBox
    speed: float = 0.0
    yaw_rate: float = 0.0
    role: Role = Role.BACKGROUND
    comm_capable: bool = True

    @property
    def pose(self) -> Pose2D:
        return self.box.center


class LightPhase(str, Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    RED = "Red"


_NEXT_PHASE = {LightPhase.GREEN: LightPhase.YELLOW, LightPhase.YELLOW: LightPhase.RED,
               LightPhase.RED: LightPhase.GREEN}


@dataclass(frozen=True)
class TrafficLight:
    """Signal head for one approach axis ("NS" or "EW") of an intersection."""

    intersection_id: int
    axis: str
    phase: LightPhase
    timer: float = 0.0
    green: float = 30.0
    yellow: float = 3.0
    red: float = 33.0

    def duration(self, phase: LightPhase) -> float:
        return {LightPhase.GREEN: self.green, LightPhase.YELLOW: self.yellow,
                LightPhase.RED: self.red}[phase]

    def advanced(self, dt: float) -> "TrafficLight":
        phase, timer = self.phase, self.timer + dt
        while timer >= self.duration(phase) - 1e-9:
            timer -= self.duration(phase)
            phase = _NEXT_PHASE[phase]
        return replace(self, phase=phase, timer=max(timer, 0.0))


@dataclass(frozen=True)
class ControlSignal:
    throttle: float = 0.0
    brake: float = 0.0
    steer: float = 0.0

    def clamped(self) -> "ControlSignal":
        return ControlSignal(
            min(1.0, max(0.0, self.throttle)),
            min(1.0, max(0.0, self.brake)),
            min(1.0, max(-1.0, self.steer)),
        )

    def within_bounds(self) -> bool:
        return 0.0 <= self.throttle <= 1.0 and 0.0 <= self.brake <= 1.0 and -1.0 <= self.steer <= 1.0


FULL_BRAKE = ControlSignal(0.0, 1.0, 0.0)


@dataclass(frozen=True)
class WorldState:
    tick: int
    dt: float
    vehicles: tuple[VehicleState, ...]
    static_obstacles: tuple[OrientedBox, ...] = ()
    lights: tuple[TrafficLight, ...] = ()

    def __post_init__(self):
        ids = [v.id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ValueError("vehicle ids must be unique")
        if sum(v.role is Role.EGO for v in self.vehicles) != 1:
            raise ValueError("world needs exactly one Ego vehicle")

    @property
    def time(self) -> float:
        return self.tick * self.dt

    def vehicle(self, vid: int) -> VehicleState:
        return self.vehicles[self._index[vid]]

    def index_of(self, vid: int) -> int:
        """Position of vehicle ``vid`` in ``vehicles`` and in the rows of :attr:`box_arrays`."""
        return self._index[vid]

    @cached_property
    def _index(self) -> dict[int, int]:
        return {v.id: i for i, v in enumerate(self.vehicles)}

    @cached_property
    def box_arrays(self) -> dict[str, np.ndarray]:
        """:func:`vehicle_arrays` of the vehicles followed by the static obstacles.

        Static entries have id -1 and speed 0. Computed once per state and
        shared by every sensor that scans it.
        """
        a = vehicle_arrays(self.vehicles)
        obs = self.static_obstacles
        extra = {
            "id": np.full(len(obs), -1, dtype=np.int64),
            "x": np.array([b.center.x for b in obs]),
            "y": np.array([b.center.y for b in obs]),
            "heading": np.array([b.center.heading for b in obs]),
            "half_length": np.array([b.length / 2.0 for b in obs]),
            "half_width": np.array([b.width / 2.0 for b in obs]),
            "height": np.array([b.height for b in obs]),
            "speed": np.zeros(len(obs)),
        }
        out = {k: np.concatenate([a[k], extra[k]]) for k in a}
        out["radius"] = np.hypot(out["half_length"], out["half_width"])
        return out

    @property
    def ego(self) -> VehicleState:
        for v in self.vehicles:
            if v.role is Role.EGO:
                return v
        raise LookupError("no ego")

    def light(self, intersection_id: int, axis: str) -> Optional[TrafficLight]:
        for lt in self.lights:
            if lt.intersection_id == intersection_id and lt.axis == axis:
                return lt
        return None


def step_vehicle(v: VehicleState, ctrl: ControlSignal, dt: float) -> VehicleState:
    if not ctrl.within_bounds():
        ctrl = ctrl.clamped()
    if v.speed == 0.0 and v.yaw_rate == 0.0 and ctrl.throttle * ACCEL_MAX <= ctrl.brake * DECEL_MAX:
        return v  # parked and not pushed forward: the update below is the identity
    accel = ACCEL_MAX * ctrl.throttle - DECEL_MAX * ctrl.brake
    delta = ctrl.steer * STEER_MAX
    p = v.box.center
    # explicit Euler on the pre-step speed
    yaw_rate = v.speed / WHEELBASE * math.tan(delta)
    x = p.x + v.speed * math.cos(p.heading) * dt
    y = p.y + v.speed * math.sin(p.heading) * dt
    heading = p.heading + yaw_rate * dt
    speed = max(0.0, v.speed + accel * dt)
    b = v.box
    return VehicleState(v.id, OrientedBox(Pose2D(x, y, heading), b.length, b.width, b.height),
                        speed, yaw_rate, v.role, v.comm_capable)


def step(world: WorldState, controls: Mapping[int, ControlSignal]) -> WorldState:
    """Advance every vehicle one tick; vehicles without a control coast."""
    zero = ControlSignal()
    vehicles = tuple(step_vehicle(v, controls.get(v.id, zero), world.dt) for v in world.vehicles)
    lights = tuple(lt.advanced(world.dt) for lt in world.lights)
    return WorldState(world.tick + 1, world.dt, vehicles, world.static_obstacles, lights)


def boxes_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis test for two oriented rectangles; touching counts as overlap."""
    dx, dy = a.center.x - b.center.x, a.center.y - b.center.y
    if dx * dx + dy * dy > (a.radius + b.radius) ** 2:
        return False
    ca, cb = a.corners(), b.corners()
    for box in (a, b):
        c, s = math.cos(box.center.heading), math.sin(box.center.heading)
        for axis in ((c, s), (-s, c)):
            pa = ca @ axis
            pb = cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def static_id(index: int) -> int:
    """Pseudo id of a static obstacle (negative, so it sorts before vehicles)."""
    return -(index + 1)


def check_collision(world: WorldState) -> Optional[tuple[int, int]]:
    """First overlapping (ego, other) pair in ascending id order of the other party."""
    ego = world.ego
    candidates: list[tuple[int, OrientedBox]] = [
        (static_id(i), box) for i, box in enumerate(world.static_obstacles)
    ]
    candidates += [(v.id, v.box) for v in world.vehicles if v.id != ego.id]
    candidates.sort(key=lambda c: c[0])
    for other_id, box in candidates:
        if boxes_overlap(ego.box, box):
            return (min(ego.id, other_id), max(ego.id, other_id))
    return None


class Status(str, Enum):
    SUCCESS = "Success"
    COLLISION = "Collision"
    STAGNATION = "Stagnation"


@dataclass(frozen=True)
class Goal:
    pose: Pose2D
    radius: float = 2.0

    def reached(self, x: float, y: float) -> bool:
        return math.hypot(x - self.pose.x, y - self.pose.y) <= self.radius


@dataclass(frozen=True)
class EpisodeOutcome:
    status: Status
    completion_time: float
    ticks: int
    bandwidth_report: Optional[object] = None
    collision_pair: Optional[tuple[int, int]] = None

    @property
    def success(self) -> bool:
        return self.status is Status.SUCCESS


def classify_outcome(world: WorldState, goal: Goal, time_limit: float = DEFAULT_TIME_LIMIT
                     ) -> Optional[EpisodeOutcome]:
    pair = check_collision(world)
    if pair is not None:
        return EpisodeOutcome(Status.COLLISION, world.time, world.tick, collision_pair=pair)
    ego = world.ego.pose
    if goal.reached(ego.x, ego.y):
        return EpisodeOutcome(Status.SUCCESS, world.time, world.tick)
    # integer tick comparison avoids float drift in tick * dt
    if world.tick >= round(time_limit / world.dt):
        return EpisodeOutcome(Status.STAGNATION, world.time, world.tick)
    return None


REPLAY_COLUMNS = ("tick", "vehicle_id", "x", "y", "heading", "speed", "role")


class ReplayWriter:
    """Per-tick vehicle log, one CSV row per (tick, vehicle)."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(REPLAY_COLUMNS)

    def write(self, world: WorldState) -> None:
        for v in world.vehicles:
            p = v.pose
            self._writer.writerow([world.tick, v.id, f"{p.x:.4f}", f"{p.y:.4f}",
                                   f"{p.heading:.5f}", f"{v.speed:.4f}", v.role.value])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def vehicle_arrays(vehicles: Iterable[VehicleState]) -> dict[str, np.ndarray]:
    """Columnar view of vehicle boxes, used by the vectorized consumers."""
    vs: Sequence[VehicleState] = list(vehicles)
    return {
        "id": np.array([v.id for v in vs], dtype=np.int64),
        "x": np.array([v.box.center.x for v in vs]),
        "y": np.array([v.box.center.y for v in vs]),
        "heading": np.array([v.box.center.heading for v in vs]),
        "half_length": np.array([v.box.length / 2.0 for v in vs]),
        "half_width": np.array([v.box.width / 2.0 for v in vs]),
        "height": np.array([v.box.height for v in vs]),
        "speed": np.array([v.speed for v in vs]),
    }
