"""Perception-limited driving from fused detections.

The ego tracks whatever the exchange hands it, extrapolates every track at
constant velocity and brakes hard when one of them would meet the ego's own
predicted progress along the route. Before entering a route interval that
crosses other traffic it requires the gap to stay clear until it has driven
through the whole interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..perception import Detection
from ..world import ControlSignal, VehicleState
from .control import pure_pursuit_steer, speed_control
from .route import Route, cover_points


@dataclass
class TrackedObject:
    track_id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    age: int  # observations so far
    last_seen: int
    length: float = 4.5
    width: float = 1.9
    heading: float = 0.0
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(frozen=True)
class TrackerConfig:
    gate: float = 2.0
    max_missed: int = 10
    window: int = 10  # observations used for the velocity difference
    still_speed: float = 0.5  # slower estimates are treated as noise on a parked object
    self_radius: float = 2.0  # detections this close to the ego are the ego itself


class Tracker:
    def __init__(self, dt: float, config: TrackerConfig = TrackerConfig()):
        self.dt = dt
        self.config = config
        self.tracks: list[TrackedObject] = []
        self._next_id = 0

    def update(self, detections: Iterable[Detection], tick: int, ego_xy=None) -> list[TrackedObject]:
        cfg = self.config
        dets = list(detections)
        if ego_xy is not None:
            dets = [d for d in dets
                    if math.hypot(d.x - ego_xy[0], d.y - ego_xy[1]) > cfg.self_radius]
        # predicted positions for association
        pred = []
        for tr in self.tracks:
            gap = (tick - tr.last_seen) * self.dt
            pred.append((tr.position[0] + tr.velocity[0] * gap, tr.position[1] + tr.velocity[1] * gap))
        pairs = []
        for i, (px, py) in enumerate(pred):
            for j, d in enumerate(dets):
                dist = math.hypot(d.x - px, d.y - py)
                if dist <= cfg.gate:
                    pairs.append((dist, i, j))
        pairs.sort()
        used_t, used_d = set(), set()
        for _, i, j in pairs:
            if i in used_t or j in used_d:
                continue
            used_t.add(i)
            used_d.add(j)
            self._observe(self.tracks[i], dets[j], tick)
        for j, d in enumerate(dets):
            if j not in used_d:
                tr = TrackedObject(self._next_id, d.xy, (0.0, 0.0), 0, tick, d.l, d.w, d.a)
                self._next_id += 1
                self._observe(tr, d, tick)
                self.tracks.append(tr)
        self.tracks = [tr for tr in self.tracks if tick - tr.last_seen <= cfg.max_missed]
        return self.tracks

    def _observe(self, tr: TrackedObject, d: Detection, tick: int) -> None:
        tr.history.append((tick, d.x, d.y))
        del tr.history[:-self.config.window]
        tr.position = d.xy
        tr.last_seen = tick
        tr.age += 1
        tr.length, tr.width, tr.heading = d.l, d.w, d.a
        t0, x0, y0 = tr.history[0]
        if tick > t0:
            span = (tick - t0) * self.dt
            vx, vy = (d.x - x0) / span, (d.y - y0) / span
            if math.hypot(vx, vy) < self.config.still_speed:
                vx = vy = 0.0
            tr.velocity = (vx, vy)


@dataclass(frozen=True)
class CooperativeConfig:
    horizon: float = 3.0  # s of constant-velocity lookahead
    sample: float = 0.1
    margin: float = 0.3  # m added to the footprint radii
    predict_accel: float = 2.5  # m/s^2 the ego is assumed to accelerate with
    clearance: float = 1.0  # s the gap must remain open after the ego clears an exposure zone
    commit_distance: float = 3.0  # m before an exposure zone where the gap check starts to matter


def predicted_progress(tau: np.ndarray, v0: float, v_target: float, accel: float) -> np.ndarray:
    """Arc length covered after ``tau`` seconds accelerating at ``accel`` up to ``v_target``."""
    v0 = min(v0, v_target)
    t_acc = (v_target - v0) / accel
    ramp = v0 * tau + 0.5 * accel * tau ** 2
    cruise = v0 * t_acc + 0.5 * accel * t_acc ** 2 + v_target * (tau - t_acc)
    return np.where(tau <= t_acc, ramp, cruise)


class CooperativePolicy:
    def __init__(self, route: Route, target_speed: float, ego_id: int, dt: float,
                 config: CooperativeConfig = CooperativeConfig(),
                 tracker_config: TrackerConfig = TrackerConfig()):
        self.route = route
        self.target_speed = target_speed
        self.ego_id = ego_id
        self.config = config
        self.tracker = Tracker(dt, tracker_config)
        self.braking = False

    def horizon(self, s0: float, speed: float) -> float:
        """3 s, stretched to cover driving through the next exposure zone plus clearance."""
        cfg = self.config
        h = cfg.horizon
        zone = self.route.next_exposure(s0)
        if zone is None:
            return h
        lo, hi = zone
        if lo - s0 > cfg.commit_distance + speed * cfg.horizon:
            return h
        tau = np.arange(0.0, 30.0, cfg.sample)
        prog = predicted_progress(tau, speed, self.target_speed, cfg.predict_accel)
        past = np.nonzero(prog >= hi - s0 + 2.5)[0]
        t_clear = tau[past[0]] if past.size else tau[-1]
        return max(h, float(t_clear) + cfg.clearance)

    def threats(self, ego: VehicleState, s0: float, tracks: list[TrackedObject]) -> list[int]:
        cfg = self.config
        horizon = self.horizon(s0, ego.speed)
        tau = np.arange(0.0, horizon + 1e-9, cfg.sample)
        prog = s0 + predicted_progress(tau, ego.speed, self.target_speed, cfg.predict_accel)
        prog = np.minimum(prog, self.route.length)
        exy = self.route.point_at(prog)
        e_pts, r_e = cover_points(exy[:, 0], exy[:, 1], self.route.heading_at(prog),
                                  ego.box.length, ego.box.width)  # (T, ne, 2)
        if not tracks:
            return []
        pos = np.array([tr.position for tr in tracks])
        vel = np.array([tr.velocity for tr in tracks])
        moving = np.hypot(vel[:, 0], vel[:, 1]) > 0
        heading = np.where(moving, np.arctan2(vel[:, 1], vel[:, 0]),
                           [tr.heading for tr in tracks])
        s_tr, lat = self.route.project_many(pos)
        diff = np.angle(np.exp(1j * (heading - self.route.heading_at(s_tr))))
        # following traffic behind the ego in its lane is left to yield
        follower = (s_tr < s0) & (np.abs(lat) < 2.0) & (np.abs(diff) < math.radians(45))
        keep = np.nonzero(~follower)[0]
        if keep.size == 0:
            return []
        # tracks sharing a footprint get their circle covers in one call
        dims = [(max(tracks[i].length, tracks[i].width), min(tracks[i].length, tracks[i].width))
                for i in keep]
        hit = np.zeros(len(keep), dtype=bool)
        for lw in sorted(set(dims)):
            rows = np.array([j for j, d in enumerate(dims) if d == lw])
            idx = keep[rows]
            cx = pos[idx, 0:1] + vel[idx, 0:1] * tau  # (K, T)
            cy = pos[idx, 1:2] + vel[idx, 1:2] * tau
            o_pts, r_o = cover_points(cx, cy, np.broadcast_to(heading[idx, None], cx.shape), *lw)
            d = e_pts[None, :, :, None, :] - o_pts[:, :, None, :, :]  # (K, T, ne, M, 2)
            d2 = np.einsum("...i,...i->...", d, d)
            hit[rows] = (d2 < (r_e + r_o + cfg.margin) ** 2).any(axis=(1, 2, 3))
        return [tracks[i].track_id for i, h in zip(keep, hit) if h]

    def __call__(self, ego: VehicleState, fused: Iterable[Detection], tick: int) -> ControlSignal:
        p = ego.pose
        tracks = self.tracker.update(fused, tick, (p.x, p.y))
        s0, _ = self.route.project(p.x, p.y)
        steer = pure_pursuit_steer(ego, self.route, s0)
        self.braking = bool(self.threats(ego, s0, tracks))
        if self.braking:
            return ControlSignal(0.0, 1.0, steer)
        throttle, brake = speed_control(ego.speed, self.target_speed)
        return ControlSignal(throttle, brake, steer).clamped()


def cooperative_policy(policy: CooperativePolicy, fused: Iterable[Detection],
                       ego: VehicleState, tick: int) -> ControlSignal:
    """Functional entry point; the tracker history lives in ``policy``."""
    return policy(ego, fused, tick)
