"""Ground-truth space-time expert.

The ego's future is searched on a one-row grid laid along its route (one
cell per ``cell`` meters of arc length, one timestep per cell at target
speed), so a plan is a schedule of when to hold and when to advance. Other
vehicles are extrapolated at constant velocity, up to where the ground truth
says they will stop for a signal, and swept through each cell
analytically; a cell is blocked over the whole window in which any part of
another vehicle comes within the inflation margin of the ego footprint there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..world import FULL_BRAKE, ControlSignal, VehicleState, WorldState
from .control import pure_pursuit_steer, speed_control
from .planner import SpaceTimePlan, plan_astar
from .route import Route, cover_points


@dataclass(frozen=True)
class OracleConfig:
    cell: float = 1.0  # meters of route per grid cell
    horizon_s: float = 20.0
    inflation: float = 0.5
    dilation_before: float = 0.3  # s a cell is blocked before a vehicle reaches it
    dilation_after: float = 0.8  # s it stays blocked after the vehicle leaves
    plan_accel: float = 2.0  # m/s^2 assumed when estimating how far the ego lags the plan
    stop_decel: float = 3.0
    stop_margin: float = 0.5
    max_cells: int = 150


def is_follower(route: Route, s_ego: float, v: VehicleState) -> bool:
    """Same-direction traffic behind the ego in its own lane, which yields to the ego."""
    return bool(followers(route, s_ego, [v])[0])


def followers(route: Route, s_ego: float, vehicles: list[VehicleState]) -> np.ndarray:
    """:func:`is_follower` for many vehicles at once."""
    xy = np.array([[v.pose.x, v.pose.y] for v in vehicles])
    s, lat = route.project_many(xy)
    heading = np.array([v.pose.heading for v in vehicles])
    diff = np.angle(np.exp(1j * (heading - route.heading_at(s))))
    return (s < s_ego) & (np.abs(lat) <= 2.0) & (np.abs(diff) < math.radians(45))


def ego_lag(distances: np.ndarray, v0: float, v_target: float, accel: float) -> np.ndarray:
    """Extra seconds an ego starting at ``v0`` needs over cruising at ``v_target``."""
    v0 = min(v0, v_target)
    d_acc = (v_target ** 2 - v0 ** 2) / (2 * accel)
    t = np.where(distances <= d_acc,
                 (np.sqrt(v0 ** 2 + 2 * accel * np.minimum(distances, d_acc)) - v0) / accel,
                 (v_target - v0) / accel + (distances - d_acc) / v_target)
    return np.maximum(t - distances / v_target, 0.0)


def sweep_intervals(cells_xy: np.ndarray, cells_heading: np.ndarray, ego: VehicleState,
                    others: list[VehicleState], inflation: float,
                    travel: Optional[np.ndarray] = None):
    """Per (vehicle, cell) time interval [t0, t1] of overlap with the ego footprint.

    Vehicles move at constant velocity, each for at most ``travel`` meters
    (unbounded by default) after which it stays put. Returns two (K, N)
    arrays; cells never touched get t0 = +inf. A vehicle that stops covers the
    hull of its moving and its parked overlap.
    """
    n = len(cells_xy)
    k = len(others)
    if k == 0:
        return np.full((0, n), np.inf), np.full((0, n), -np.inf)
    e_pts, r_e = cover_points(cells_xy[:, 0], cells_xy[:, 1], cells_heading,
                              ego.box.length, ego.box.width)  # (N, ne, 2)
    covers = [cover_points(np.array(v.pose.x), np.array(v.pose.y), np.array(v.pose.heading),
                           v.box.length, v.box.width) for v in others]
    m = max(len(p) for p, _ in covers)
    # pad each cover by repeating its first circle, which leaves min/max unchanged
    o_pts = np.stack([np.concatenate([p, np.repeat(p[:1], m - len(p), axis=0)]) for p, _ in covers])
    r_o = np.array([r for _, r in covers])
    direction = np.array([[math.cos(v.pose.heading), math.sin(v.pose.heading)] for v in others])
    speed = np.array([v.speed for v in others])
    w = direction * speed[:, None]  # (K, 2)
    big_r2 = (r_e + r_o[:, None] + inflation) ** 2  # (K, 1)

    def overlap(pts):
        d0 = e_pts[:, :, None, None, :] - pts[None, None, :, :, :]  # (N, ne, K, M, 2)
        c = np.einsum("...i,...i->...", d0, d0) - big_r2
        return d0, c

    d0, c = overlap(o_pts)
    ww = np.einsum("ki,ki->k", w, w)  # (K,)
    moving = ww >= 1e-9
    b = np.einsum("...kmi,ki->...km", d0, w)
    ww_safe = np.where(moving, ww, 1.0)[:, None]
    disc = b * b - ww_safe * c
    ok = disc > 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    lo = np.where(ok, (b - sq) / ww_safe, np.inf).min(axis=(1, 3)).T  # (K, N)
    hi = np.where(ok, (b + sq) / ww_safe, -np.inf).max(axis=(1, 3)).T
    still = (c < 0).any(axis=(1, 3)).T  # (K, N)
    t0 = np.where(moving[:, None], lo, np.where(still, -np.inf, np.inf))
    t1 = np.where(moving[:, None], hi, np.where(still, np.inf, -np.inf))
    if travel is not None:
        travel = np.asarray(travel, dtype=float)
        stops = moving & np.isfinite(travel)
        if stops.any():
            t_stop = np.where(stops, travel / np.where(moving, speed, 1.0), np.inf)[:, None]
            parked = o_pts + (direction * np.where(stops, travel, 0.0)[:, None])[:, None, :]
            _, c_end = overlap(parked)
            end_hit = (c_end < 0).any(axis=(1, 3)).T & stops[:, None]
            # moving part, cut at the stop time
            cut = stops[:, None] & (t0 > t_stop)
            t0 = np.where(cut, np.inf, t0)
            t1 = np.where(cut, -np.inf, np.where(stops[:, None], np.minimum(t1, t_stop), t1))
            t0 = np.where(end_hit, np.minimum(t0, t_stop), t0)
            t1 = np.where(end_hit, np.inf, t1)
    return t0, t1


def reachable(blocked: np.ndarray) -> np.ndarray:
    """(cell, timestep) states reachable from cell 0 at t = 0 by holding or advancing one cell."""
    n, h = blocked.shape
    reach = np.zeros_like(blocked)
    reach[0, 0] = not blocked[0, 0]
    for t in range(1, h):
        prev = reach[:, t - 1]
        nxt = prev.copy()
        nxt[1:] |= prev[:-1]
        reach[:, t] = nxt & ~blocked[:, t]
    return reach


class OraclePolicy:
    """Replans every tick from ground truth and tracks the first hold of the plan."""

    def __init__(self, route: Route, target_speed: float, ego_id: int,
                 config: OracleConfig = OracleConfig(), goal_s: Optional[float] = None,
                 travel_limit: Optional[Callable[[WorldState, VehicleState], float]] = None):
        self.route = route
        self.travel_limit = travel_limit
        self.goal_s = route.length if goal_s is None else min(goal_s, route.length)
        self.target_speed = target_speed
        self.ego_id = ego_id
        self.config = config
        self.last_plan: Optional[SpaceTimePlan] = None
        self.failures = 0
        self.partial = False  # last plan stops short of the window end
        self.last_table: Optional[np.ndarray] = None

    def occupancy_table(self, world: WorldState, s0: float):
        cfg = self.config
        ego = world.vehicle(self.ego_id)
        remaining = max(self.goal_s - s0, 0.0)
        step = cfg.cell / self.target_speed
        horizon = int(math.ceil(cfg.horizon_s / step))
        # keep the goal window well inside the horizon so holds remain possible
        n = min(cfg.max_cells, int(0.6 * horizon), int(math.ceil(remaining / cfg.cell))) + 1
        s = np.minimum(s0 + cfg.cell * np.arange(n), self.route.length)
        xy = self.route.point_at(s)
        heading = self.route.heading_at(s)
        reach = remaining + self.target_speed * cfg.horizon_s
        near = [v for v in world.vehicles if v.id != self.ego_id
                and math.hypot(v.pose.x - ego.pose.x, v.pose.y - ego.pose.y)
                - v.speed * cfg.horizon_s <= reach + 10.0]
        others = []
        if near:
            follow = followers(self.route, s0, near)
            others = [v for v, f in zip(near, follow) if not f]
        blocked = np.zeros((n, horizon + 1), dtype=bool)
        if others:
            travel = np.full(len(others), np.inf)
            if self.travel_limit is not None:
                travel = np.array([self.travel_limit(world, v) for v in others])
            # drop vehicles whose swept path over the horizon stays clear of the window box
            pad = ego.box.radius + cfg.inflation + 0.5
            lo_xy, hi_xy = xy.min(axis=0) - pad, xy.max(axis=0) + pad
            back_t = cfg.dilation_after + self.target_speed / cfg.plan_accel
            keep = []
            for v, d in zip(others, travel):
                p, r = v.pose, v.box.radius
                c, s_ = math.cos(p.heading), math.sin(p.heading)
                dist = min(v.speed * horizon * step, d)
                back = v.speed * back_t  # a recent pass still blocks through dilation and lag
                x0, y0 = p.x - c * back, p.y - s_ * back
                x1, y1 = p.x + c * dist, p.y + s_ * dist
                keep.append(max(x0, x1) + r >= lo_xy[0] and min(x0, x1) - r <= hi_xy[0]
                            and max(y0, y1) + r >= lo_xy[1] and min(y0, y1) - r <= hi_xy[1])
            keep = np.array(keep)
            others = [v for v, k in zip(others, keep) if k]
            travel = travel[keep]
        if others:
            t0, t1 = sweep_intervals(xy, heading, ego, others, cfg.inflation, travel)
            lag = ego_lag(s - s0, ego.speed, self.target_speed, cfg.plan_accel)
            # the ego reaches a cell up to ``lag`` later than planned, so a pass in
            # front of a vehicle must leave that much more room as well
            lo = np.floor((t0 - cfg.dilation_before - lag[None, :]) / step)
            hi = np.ceil((t1 + cfg.dilation_after + lag[None, :]) / step)
            active = (t0 < np.inf) & (hi >= 0) & (lo <= horizon)
            for j, i in zip(*np.nonzero(active)):
                a = int(max(lo[j, i], 0)) if np.isfinite(lo[j, i]) else 0
                b = int(min(hi[j, i], horizon)) if np.isfinite(hi[j, i]) else horizon
                blocked[i, a:b + 1] = True
        blocked[0, 0] = False  # the ego is where it is
        return blocked, step, horizon

    def plan(self, world: WorldState) -> tuple[Optional[SpaceTimePlan], float]:
        """Plan to the end of the window, or failing that to the farthest cell
        the ego can reach and then hold until the horizon."""
        ego = world.vehicle(self.ego_id)
        s0, _ = self.route.project(ego.pose.x, ego.pose.y)
        blocked, step, horizon = self.occupancy_table(world, s0)
        self.last_table = blocked
        n = blocked.shape[0]
        reach = reachable(blocked)
        target, table = n - 1, blocked
        self.partial = False
        if not reach[n - 1].any():
            # a cell may only be entered once it stays free to the horizon
            holdable = np.flip(np.logical_or.accumulate(np.flip(blocked, axis=1), axis=1), axis=1)
            ok = np.nonzero((reach & ~holdable).any(axis=1))[0]
            if ok.size == 0:
                return None, s0
            target = int(ok[-1])
            self.partial = True
            table = blocked.copy()
            table[target] = holdable[target]
        # cells are numbered from the goal back, so ties in the search favour
        # holding as late as possible rather than stopping early
        plan = plan_astar((n - 1, 0), (n - 1 - target, 0),
                          lambda c, t: table[n - 1 - c[0], t],
                          horizon, shape=(n, 1), resolution=self.config.cell, step=step)
        return plan, s0

    def target_from_plan(self, plan: SpaceTimePlan, hold_at_end: bool = False,
                         blocked: Optional[np.ndarray] = None) -> float:
        """Cruise, glide, or brake toward the first cell where the plan holds.

        Gliding means driving the cells up to the hold at the uniform speed
        that reaches it as the plan leaves it, and is only used when
        ``blocked`` shows every cell free while the glide passes through.
        """
        cells = plan.cells
        n = cells[0][0] + 1  # cells are numbered from the window end back
        stop = leave = None
        for k, ((x0, _, _), (x1, _, _)) in enumerate(zip(cells, cells[1:])):
            if x1 == x0:
                stop = x0
                leave = next((j for j in range(k + 1, len(cells)) if cells[j][0] != x0), None)
                break
        if stop is None and hold_at_end:
            stop = cells[-1][0]
        if stop is None:
            return self.target_speed
        progress = (cells[0][0] - stop) * self.config.cell - self.config.stop_margin
        braking = 0.0 if progress <= 0 else min(
            self.target_speed, math.sqrt(2 * self.config.stop_decel * progress))
        h = n - 1 - stop  # hold cell counted from the ego
        if leave is None or blocked is None or h < 1:
            return braking
        wait = cells[leave][2] - 1  # last timestep spent on the hold cell
        ratio = h / wait  # cells per timestep
        for i in range(h + 1):
            a = int(math.floor(i / ratio))
            b = min(int(math.ceil((i + 1) / ratio)), blocked.shape[1] - 1)
            if blocked[i, a:b + 1].any():
                return braking
        return min(self.target_speed, ratio * self.target_speed)

    def __call__(self, world: WorldState) -> ControlSignal:
        ego = world.vehicle(self.ego_id)
        plan, s0 = self.plan(world)
        self.last_plan = plan
        if plan is None:
            self.failures += 1
            return FULL_BRAKE
        target = self.target_from_plan(plan, self.partial, self.last_table)
        throttle, brake = speed_control(ego.speed, target)
        return ControlSignal(throttle, brake, pure_pursuit_steer(ego, self.route, s0)).clamped()


def oracle_policy(world: WorldState, route: Route, target_speed: float,
                  config: OracleConfig = OracleConfig()) -> ControlSignal:
    """Stateless single-tick form of :class:`OraclePolicy`."""
    return OraclePolicy(route, target_speed, world.ego.id, config)(world)
