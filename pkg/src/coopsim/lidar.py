"""Occlusion-aware 2.5D lidar.

Rays are cast in the ground plane, one fan per elevation ring. A box blocks a
ray where the ray's height at that range lies inside ``[0, box height]``, so a
descending ring passes over a low car but not over a truck. Static obstacles
occlude like any box but their returns are dropped, as if the sensor stack
already subtracted the known map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .world import Pose2D, WorldState

N_POINTS = 2048


@dataclass(frozen=True)
class LidarConfig:
    n_azimuth: int = 1440
    elevations_deg: tuple[float, ...] = (-1.0, -2.0, -3.0, -5.0)
    max_range: float = 70.0
    sensor_height: float = 1.8
    n_points: int = N_POINTS


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Sensor-frame cloud (x forward, y left, z above ground).

    ``valid`` is False for padding entries; ``hit_ids`` holds the id of the
    vehicle each ray return came from (-1 for padding).
    """

    points: np.ndarray
    valid: np.ndarray
    hit_ids: np.ndarray
    source_id: int
    tick: int
    sensor_pose: Pose2D

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def world_xy(self) -> np.ndarray:
        p = self.sensor_pose
        c, s = math.cos(p.heading), math.sin(p.heading)
        x, y = self.points[:, 0], self.points[:, 1]
        return np.stack([p.x + c * x - s * y, p.y + s * x + c * y], axis=1)


@numba.njit(cache=True)
def _cast_rays(sx, sy, heading, n_az, tan_el, sensor_h, max_range,
               bx, by, bhead, bhl, bhw, bh):
    """Nearest hit distance and box index per (azimuth, ring).

    Each box is only tested against the azimuths inside its angular span as
    seen from the sensor, with one index of slack on either side.
    """
    n_r = tan_el.shape[0]
    n_b = bx.shape[0]
    step = 2.0 * math.pi / n_az
    dist = np.full((n_az, n_r), np.inf)
    hit = np.full((n_az, n_r), -1, dtype=np.int64)
    for b in range(n_b):
        cb = math.cos(bhead[b])
        sb = math.sin(bhead[b])
        rx = sx - bx[b]
        ry = sy - by[b]
        ox = cb * rx + sb * ry
        oy = -sb * rx + cb * ry
        if abs(ox) <= bhl[b] and abs(oy) <= bhw[b]:
            continue  # sensor inside the box sees nothing of it
        # angular span of the corners relative to the direction of the center
        ca = math.atan2(by[b] - sy, bx[b] - sx)
        dmin = 0.0
        dmax = 0.0
        for kx in (-1.0, 1.0):
            for ky in (-1.0, 1.0):
                px = bx[b] + kx * bhl[b] * cb - ky * bhw[b] * sb
                py = by[b] + kx * bhl[b] * sb + ky * bhw[b] * cb
                d = math.atan2(py - sy, px - sx) - ca
                while d > math.pi:
                    d -= 2.0 * math.pi
                while d <= -math.pi:
                    d += 2.0 * math.pi
                dmin = min(dmin, d)
                dmax = max(dmax, d)
        rel = ca - heading
        i0 = int(math.floor((rel + dmin) / step)) - 1
        i1 = int(math.ceil((rel + dmax) / step)) + 1
        for ii in range(i0, i1 + 1):
            i = ii % n_az
            ang = heading + i * step
            c = math.cos(ang)
            s = math.sin(ang)
            dx = cb * c + sb * s
            dy = -sb * c + cb * s
            if abs(dx) < 1e-12:
                if abs(ox) > bhl[b]:
                    continue
                tx0 = -np.inf
                tx1 = np.inf
            else:
                t1 = (-bhl[b] - ox) / dx
                t2 = (bhl[b] - ox) / dx
                tx0 = min(t1, t2)
                tx1 = max(t1, t2)
            if abs(dy) < 1e-12:
                if abs(oy) > bhw[b]:
                    continue
                ty0 = -np.inf
                ty1 = np.inf
            else:
                t1 = (-bhw[b] - oy) / dy
                t2 = (bhw[b] - oy) / dy
                ty0 = min(t1, t2)
                ty1 = max(t1, t2)
            t_in = max(tx0, ty0)
            t_out = min(tx1, ty1)
            if t_in < 0.0 or t_out < t_in or t_in > max_range:
                continue
            for r in range(n_r):
                t = tan_el[r]
                # range interval where 0 <= sensor_h + d * t <= box height
                if t < 0.0:
                    lo_h = (bh[b] - sensor_h) / t
                    if lo_h < 0.0:
                        lo_h = 0.0
                    hi_h = sensor_h / -t
                elif t > 0.0:
                    lo_h = 0.0
                    hi_h = (bh[b] - sensor_h) / t
                else:
                    if sensor_h > bh[b]:
                        continue
                    lo_h = 0.0
                    hi_h = np.inf
                lo = max(t_in, lo_h)
                hi = min(t_out, hi_h, max_range)
                if lo <= hi and (lo < dist[i, r] or (lo == dist[i, r] and b < hit[i, r])):
                    dist[i, r] = lo
                    hit[i, r] = b
    return dist, hit


@numba.njit(cache=True)
def farthest_point_indices(points, k, start):
    """Greedy farthest-point sampling; returns ``k`` indices in selection order.

    Ties go to the lowest index. Points are processed in chunks of consecutive
    indices with a bounding box each; a chunk is skipped when the new center
    cannot come closer to any of its points than their current distances, so
    the result equals the plain O(n k) loop.
    """
    n = points.shape[0]
    chunk = 64
    nc = (n + chunk - 1) // chunk
    out = np.empty(k, dtype=np.int64)
    best = np.full(n, np.inf)
    lo = np.empty((nc, 3))
    hi = np.empty((nc, 3))
    cmax = np.full(nc, np.inf)
    carg = np.empty(nc, dtype=np.int64)
    for c in range(nc):
        a = c * chunk
        carg[c] = a
        for d in range(3):
            lo[c, d] = points[a, d]
            hi[c, d] = points[a, d]
        for j in range(a, min(n, a + chunk)):
            for d in range(3):
                v = points[j, d]
                if v < lo[c, d]:
                    lo[c, d] = v
                if v > hi[c, d]:
                    hi[c, d] = v
    cur = start
    for i in range(k):
        out[i] = cur
        px = points[cur, 0]
        py = points[cur, 1]
        pz = points[cur, 2]
        for c in range(nc):
            g = 0.0
            for d, p in ((0, px), (1, py), (2, pz)):
                t = lo[c, d] - p
                if t > 0.0:
                    g += t * t
                t = p - hi[c, d]
                if t > 0.0:
                    g += t * t
            if g * (1.0 - 1e-9) >= cmax[c]:
                continue
            a = c * chunk
            m = -1.0
            mj = a
            for j in range(a, min(n, a + chunk)):
                dx = points[j, 0] - px
                dy = points[j, 1] - py
                dz = points[j, 2] - pz
                dd = dx * dx + dy * dy + dz * dz
                if dd < best[j]:
                    best[j] = dd
                if best[j] > m:
                    m = best[j]
                    mj = j
            cmax[c] = m
            carg[c] = mj
        far = -1.0
        fc = 0
        for c in range(nc):
            if cmax[c] > far:
                far = cmax[c]
                fc = c
        cur = carg[fc]
    return out


@numba.njit(cache=True)
def _returns(sx, sy, heading, sensor_id, n_az, tan_el, sensor_h, max_range,
             ids, x, y, hd, hl, hw, h, radius):
    """Cull boxes out of range, cast, and turn vehicle hits into sensor-frame points."""
    keep = np.empty(ids.shape[0], dtype=np.bool_)
    for b in range(ids.shape[0]):
        keep[b] = (math.hypot(x[b] - sx, y[b] - sy) - radius[b] <= max_range
                   and ids[b] != sensor_id)
    kid = ids[keep]
    dist, hit = _cast_rays(sx, sy, heading, n_az, tan_el, sensor_h, max_range, x[keep], y[keep],
                           hd[keep], hl[keep], hw[keep], h[keep])
    n = 0
    for i in range(n_az):
        for r in range(tan_el.shape[0]):
            if hit[i, r] >= 0 and kid[hit[i, r]] >= 0:  # static-map returns are dropped
                n += 1
    pts = np.empty((n, 3))
    out = np.empty(n, dtype=np.int64)
    k = 0
    step = 2.0 * math.pi / n_az
    for i in range(n_az):
        c = math.cos(i * step)
        s = math.sin(i * step)
        for r in range(tan_el.shape[0]):
            if hit[i, r] >= 0 and kid[hit[i, r]] >= 0:
                d = dist[i, r]
                pts[k, 0] = d * c
                pts[k, 1] = d * s
                pts[k, 2] = sensor_h + d * tan_el[r]
                out[k] = kid[hit[i, r]]
                k += 1
    return pts, out


def _tan_elevations(config: LidarConfig) -> np.ndarray:
    return np.tan(np.radians(np.asarray(config.elevations_deg, dtype=float)))


def raw_returns(world: WorldState, sensor_id: int, config: LidarConfig = LidarConfig()):
    """All ray returns before downsampling: (sensor-frame points, hit vehicle ids)."""
    pose = world.vehicle(sensor_id).pose
    a = world.box_arrays
    return _returns(pose.x, pose.y, pose.heading, sensor_id, config.n_azimuth,
                    _tan_elevations(config), config.sensor_height, config.max_range, a["id"],
                    a["x"], a["y"], a["heading"], a["half_length"], a["half_width"], a["height"],
                    a["radius"])


def scan(world: WorldState, sensor_id: int, config: LidarConfig = LidarConfig(),
         seed: int = 0) -> PointCloud:
    """Cast every ray and resample the returns to exactly ``config.n_points``.

    Fewer returns than needed are padded by repeating the nearest return; more
    are reduced by farthest-point sampling from a seeded start index. Padding
    entries are flagged invalid. With no returns at all the cloud is zeros.
    """
    pts, ids = raw_returns(world, sensor_id, config)
    n, k = pts.shape[0], config.n_points
    sensor = world.vehicle(sensor_id)
    if n == 0:
        return PointCloud(np.zeros((k, 3)), np.zeros(k, dtype=bool), np.full(k, -1, dtype=np.int64),
                          sensor_id, world.tick, sensor.pose)
    if n > k:
        start = int(np.random.default_rng(seed).integers(n))
        keep = np.sort(farthest_point_indices(pts, k, start))
        return PointCloud(pts[keep], np.ones(k, dtype=bool), ids[keep], sensor_id, world.tick,
                          sensor.pose)
    nearest = int(np.argmin(np.einsum("ij,ij->i", pts[:, :2], pts[:, :2])))
    pad = k - n
    points = np.concatenate([pts, np.repeat(pts[nearest:nearest + 1], pad, axis=0)])
    valid = np.concatenate([np.ones(n, dtype=bool), np.zeros(pad, dtype=bool)])
    hit_ids = np.concatenate([ids, np.full(pad, -1, dtype=np.int64)])
    return PointCloud(points, valid, hit_ids, sensor_id, world.tick, sensor.pose)
