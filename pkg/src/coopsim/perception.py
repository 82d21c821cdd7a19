"""BEV voxel grid, heatmap-cell geometry and the geometric stand-in detector."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lidar import PointCloud
from .world import Pose2D, WorldState

EXTENT_X = 140.0
EXTENT_Y = 140.0
EXTENT_Z = 5.0
VOXEL = 0.5
GRID_X = int(EXTENT_X / VOXEL)  # 280
GRID_Y = int(EXTENT_Y / VOXEL)  # 280
GRID_Z = int(EXTENT_Z / VOXEL)  # 10
HEATMAP_STRIDE = 4
HEATMAP_X = GRID_X // HEATMAP_STRIDE  # 70
HEATMAP_Y = GRID_Y // HEATMAP_STRIDE
MIN_POINTS_PER_VOXEL = 3
MAX_DETECTIONS = 50
SCORE_THRESHOLD = 0.2


@dataclass(frozen=True, eq=False)
class BevGrid:
    occupancy: np.ndarray  # (280, 280, 10) bool
    counts: np.ndarray  # same shape, points per voxel
    origin: Pose2D
    resolution: float = VOXEL
    extent: tuple[float, float, float] = (EXTENT_X, EXTENT_Y, EXTENT_Z)


def voxel_indices(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Voxel (ix, iy, iz) per point plus the in-extent mask."""
    ix = np.floor((points[:, 0] + EXTENT_X / 2) / VOXEL).astype(np.int64)
    iy = np.floor((points[:, 1] + EXTENT_Y / 2) / VOXEL).astype(np.int64)
    iz = np.floor(points[:, 2] / VOXEL).astype(np.int64)
    inside = ((ix >= 0) & (ix < GRID_X) & (iy >= 0) & (iy < GRID_Y)
              & (iz >= 0) & (iz < GRID_Z))
    return np.stack([ix, iy, iz], axis=1), inside


def voxelize(cloud: PointCloud) -> BevGrid:
    """Binary occupancy: a voxel is set when at least three points fall in it.

    The grid is centered on the sensing vehicle in x/y and spans the first 5 m
    above ground in z. Padding entries of the cloud are not counted.
    """
    pts = cloud.points[cloud.valid]
    idx, inside = voxel_indices(pts)
    idx = idx[inside]
    flat = (idx[:, 0] * GRID_Y + idx[:, 1]) * GRID_Z + idx[:, 2]
    counts = np.bincount(flat, minlength=GRID_X * GRID_Y * GRID_Z).reshape(GRID_X, GRID_Y, GRID_Z)
    return BevGrid(counts >= MIN_POINTS_PER_VOXEL, counts, cloud.sensor_pose)


@dataclass(frozen=True)
class CellIndex:
    x_ch: int
    y_ch: int
    x_co: float = 0.0
    y_co: float = 0.0

    def __post_init__(self):
        if not (0 <= self.x_ch < HEATMAP_X and 0 <= self.y_ch < HEATMAP_Y):
            raise ValueError(f"cell ({self.x_ch}, {self.y_ch}) outside {HEATMAP_X}x{HEATMAP_Y} heatmap")


def recover_center(cell: CellIndex) -> tuple[float, float]:
    x = cell.x_ch * HEATMAP_STRIDE * VOXEL - EXTENT_X / 2 + cell.x_co
    y = cell.y_ch * HEATMAP_STRIDE * VOXEL - EXTENT_Y / 2 + cell.y_co
    return (x, y)


def _axis_cell(v: float, extent: float, n: int) -> tuple[int, float]:
    size = HEATMAP_STRIDE * VOXEL
    ch = min(n - 1, int(math.floor((v + extent / 2) / size)))
    return ch, v - (ch * size - extent / 2)


def locate_cell(x: float, y: float) -> CellIndex:
    """Heatmap cell and in-cell offset of a sensor-frame point; inverse of recover_center."""
    if not (-EXTENT_X / 2 <= x < EXTENT_X / 2 and -EXTENT_Y / 2 <= y < EXTENT_Y / 2):
        raise ValueError(f"point ({x}, {y}) outside the +/-{EXTENT_X / 2} m BEV extent")
    x_ch, x_co = _axis_cell(x, EXTENT_X, HEATMAP_X)
    y_ch, y_co = _axis_cell(y, EXTENT_Y, HEATMAP_Y)
    return CellIndex(x_ch, y_ch, x_co, y_co)


def quantize_centers(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise ``recover_center(locate_cell(x, y))`` for in-extent points."""
    size = HEATMAP_STRIDE * VOXEL
    out = []
    for v, extent, n in ((x, EXTENT_X, HEATMAP_X), (y, EXTENT_Y, HEATMAP_Y)):
        ch = np.minimum(n - 1, np.floor((v + extent / 2) / size)).astype(np.int64)
        co = v - (ch * size - extent / 2)
        out.append(ch * HEATMAP_STRIDE * VOXEL - extent / 2 + co)
    return out[0], out[1]


@dataclass(frozen=True)
class Detection:
    """Object hypothesis [x, y, z, l, w, h, a] in the shared map frame, plus score."""

    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    a: float
    score: float
    object_id: int = -1  # ground-truth id, kept for diagnostics only

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.l, self.w, self.h, self.a])


@dataclass(frozen=True)
class DetectionList:
    detections: tuple[Detection, ...]
    source_id: int
    tick: int

    def __post_init__(self):
        dets = self.detections
        if len(dets) > MAX_DETECTIONS:
            raise ValueError("more than 50 detections")
        if any(d.score < SCORE_THRESHOLD for d in dets):
            raise ValueError("detection below score threshold")
        if any(a.score < b.score for a, b in zip(dets, dets[1:])):
            raise ValueError("detections not sorted by descending score")

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def centers(self) -> list[tuple[float, float]]:
        return [d.xy for d in self.detections]


@dataclass(frozen=True)
class DetectorConfig:
    hit_min: int = 5
    sigma: float = 0.1
    full_score_hits: int = 20
    threshold: float = SCORE_THRESHOLD
    max_objects: int = MAX_DETECTIONS


def detect(world: WorldState, cloud: PointCloud, sensor_vehicle: int,
           config: DetectorConfig = DetectorConfig(),
           rng: Optional[np.random.Generator] = None) -> DetectionList:
    """Report every vehicle with at least ``hit_min`` returns in the cloud.

    The reported center is the true center plus Gaussian noise, quantized
    through the heatmap cell geometry in the sensor's BEV frame and mapped
    back to the map frame. Size and heading come from ground truth.
    """
    if cloud.source_id != sensor_vehicle:
        raise ValueError("cloud belongs to another vehicle")
    ids = cloud.hit_ids[cloud.valid & (cloud.hit_ids >= 0)]
    if ids.size == 0:
        return DetectionList((), sensor_vehicle, cloud.tick)
    counts = np.bincount(ids)
    uniq = np.flatnonzero(counts)
    if rng is None:
        rng = np.random.default_rng(0)
    pose = cloud.sensor_pose
    found = []
    for vid, n in zip(uniq.tolist(), counts[uniq].tolist()):
        if n < config.hit_min:
            continue
        score = min(1.0, n / config.full_score_hits)
        if score < config.threshold:
            continue
        found.append((vid, score))
    found.sort(key=lambda f: (-f[1], f[0]))
    # one draw pair per candidate keeps noise independent of truncation order
    noise = rng.normal(0.0, config.sigma, (len(found), 2)) if config.sigma > 0 else \
        np.zeros((len(found), 2))
    a = world.box_arrays
    rows = np.array([world.index_of(vid) for vid, _ in found], dtype=np.int64)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dx, dy = a["x"][rows] - pose.x, a["y"][rows] - pose.y
    lx = c * dx + s * dy + noise[:, 0]
    ly = -s * dx + c * dy + noise[:, 1]
    inside = ((-EXTENT_X / 2 <= lx) & (lx < EXTENT_X / 2)
              & (-EXTENT_Y / 2 <= ly) & (ly < EXTENT_Y / 2))
    qx, qy = quantize_centers(lx, ly)
    wx, wy = pose.x + c * qx - s * qy, pose.y + s * qx + c * qy
    dets = []
    for k in np.nonzero(inside)[0][:config.max_objects].tolist():
        vid, score = found[k]
        b = world.vehicle(vid).box
        dets.append(Detection(float(wx[k]), float(wy[k]), b.height / 2, b.length, b.width,
                              b.height, b.center.heading, score, vid))
    return DetectionList(tuple(dets), sensor_vehicle, cloud.tick)
