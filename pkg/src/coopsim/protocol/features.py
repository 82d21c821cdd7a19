"""Round-2 point features: keypoints sampled from a cloud, each with a local BEV descriptor."""

from __future__ import annotations

import numba
import numpy as np

from ..lidar import PointCloud, farthest_point_indices
from ..perception import GRID_X, GRID_Y, GRID_Z, voxel_indices
from .messages import FEATURE_DIM, KEYPOINT_WIDTH, N_KEYPOINTS, Round2Message

PATCH = 4  # BEV cells per side around a keypoint
PATCH_Z = FEATURE_DIM // (PATCH * PATCH)  # 8 height levels


@numba.njit(cache=True)
def _column_counts(occupied, n_in, base, depth):
    """Counts of the ``depth`` consecutive voxel ids from each ``base``; ids absent count 0."""
    out = np.zeros((base.shape[0], depth), dtype=np.int64)
    n = occupied.shape[0]
    for j in range(base.shape[0]):
        i = np.searchsorted(occupied, base[j])
        while i < n and occupied[i] < base[j] + depth:
            out[j, occupied[i] - base[j]] = n_in[i]
            i += 1
    return out


def keypoint_indices(points: np.ndarray, k: int = N_KEYPOINTS) -> np.ndarray:
    """FPS from the first point; short clouds repeat their last index."""
    n = points.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n <= k:
        idx = np.arange(n)
        return np.concatenate([idx, np.full(k - n, n - 1)])
    return farthest_point_indices(np.ascontiguousarray(points, dtype=np.float64), k, 0)


def point_features(cloud: PointCloud, k: int = N_KEYPOINTS) -> np.ndarray:
    """(k, 131) float32: a 4x4x8 patch of voxel counts around each keypoint, then xyz."""
    out = np.zeros((k, KEYPOINT_WIDTH), dtype=np.float32)
    pts = cloud.points[cloud.valid]
    idx = keypoint_indices(pts, k)
    if idx.size == 0:
        return out
    kp = pts[idx]
    # sparse voxel counts: sorted occupied ids, looked up per patch column
    vox_all, inside = voxel_indices(pts)
    v = vox_all[inside]
    occupied, n_in = np.unique((v[:, 0] * GRID_Y + v[:, 1]) * GRID_Z + v[:, 2], return_counts=True)
    vox, _ = voxel_indices(kp)
    offs = np.arange(PATCH) - PATCH // 2
    gx = np.clip(vox[:, 0:1] + offs, 0, GRID_X - 1)  # (k, 4)
    gy = np.clip(vox[:, 1:2] + offs, 0, GRID_Y - 1)
    # z levels of one BEV column are consecutive voxel ids
    base = ((gx[:, :, None] * GRID_Y + gy[:, None, :]) * GRID_Z).reshape(-1)  # (k * 16,)
    counts = _column_counts(occupied, n_in, base, PATCH_Z)
    out[:, :FEATURE_DIM] = counts.reshape(k, FEATURE_DIM)
    out[:, FEATURE_DIM:] = kp
    return out


def build_round2(cloud: PointCloud) -> Round2Message:
    return Round2Message(cloud.source_id, cloud.tick, point_features(cloud))
