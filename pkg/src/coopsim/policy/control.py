"""Low-level tracking: pure-pursuit steering and proportional speed control."""

from __future__ import annotations

import math

from ..world import ACCEL_MAX, DECEL_MAX, STEER_MAX, WHEELBASE, ControlSignal, VehicleState
from .route import Route

SPEED_GAIN = 2.0  # 1/s


def pure_pursuit_steer(vehicle: VehicleState, route: Route, s: float | None = None) -> float:
    """Normalized steer in [-1, 1] toward the route point one lookahead ahead."""
    p = vehicle.pose
    if s is None:
        s, _ = route.project(p.x, p.y)
    lookahead = max(4.0, 0.8 * vehicle.speed)
    tx, ty = route.point_at(min(s + lookahead, route.length))
    lx, ly = p.to_local(float(tx), float(ty))
    dist2 = lx * lx + ly * ly
    if dist2 < 1e-6:
        return 0.0
    delta = math.atan(2.0 * WHEELBASE * ly / dist2)
    return max(-1.0, min(1.0, delta / STEER_MAX))


def speed_control(speed: float, target: float, gain: float = SPEED_GAIN) -> tuple[float, float]:
    """(throttle, brake) for a proportional acceleration command."""
    a = gain * (target - speed)
    if target <= 0.0 and speed <= 0.05:
        return 0.0, 1.0  # hold at standstill
    if a >= 0:
        return min(1.0, a / ACCEL_MAX), 0.0
    return 0.0, min(1.0, -a / DECEL_MAX)


def track(vehicle: VehicleState, route: Route, target_speed: float, s: float | None = None
          ) -> ControlSignal:
    throttle, brake = speed_control(vehicle.speed, target_speed)
    return ControlSignal(throttle, brake, pure_pursuit_steer(vehicle, route, s)).clamped()
