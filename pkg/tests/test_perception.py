import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopsim.lidar import PointCloud, scan
from coopsim.perception import (CellIndex, Detection, DetectionList, DetectorConfig, detect,
                                locate_cell, quantize_centers, recover_center, voxelize)
from coopsim.world import DT, OrientedBox, Pose2D, Role, VehicleState, WorldState
from reference import voxel_counts


def cloud_of(points, valid=None):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    valid = np.ones(len(points), dtype=bool) if valid is None else valid
    return PointCloud(points, valid, np.full(len(points), -1), 0, 0, Pose2D(0, 0))


def test_three_points_fill_the_center_voxel():
    grid = voxelize(cloud_of([[0, 0, 0.25]] * 3))
    assert grid.occupancy.shape == (280, 280, 10)
    assert grid.occupancy[140, 140, 0]
    assert grid.occupancy.sum() == 1


def test_two_points_are_not_enough():
    assert not voxelize(cloud_of([[0, 0, 0.25]] * 2)).occupancy.any()


def test_out_of_extent_point_discarded():
    grid = voxelize(cloud_of([[71.0, 0, 1.0]] * 5 + [[0, 0, 5.0]] * 5 + [[0, 0, -0.1]] * 5))
    assert grid.counts.sum() == 0


def test_padding_entries_not_counted():
    valid = np.array([True, True, False, False])
    assert not voxelize(cloud_of([[1, 1, 1]] * 4, valid)).occupancy.any()


@pytest.mark.parametrize("seed", range(100))
def test_voxelize_matches_recount(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 3000))
    # clustered clouds so that many voxels pass the threshold
    centers = rng.uniform([-75, -75, -0.5], [75, 75, 5.5], size=(max(1, n // 20), 3))
    pts = centers[rng.integers(len(centers), size=n)] + rng.normal(scale=0.3, size=(n, 3))
    grid = voxelize(cloud_of(pts))
    ref = voxel_counts(pts)
    want = np.zeros((280, 280, 10), dtype=bool)
    for key, c in ref.items():
        want[key] = c >= 3
    np.testing.assert_array_equal(grid.occupancy, want)
    assert grid.counts.sum() == sum(ref.values())


def test_recover_center_examples():
    assert recover_center(CellIndex(0, 0)) == (-70.0, -70.0)
    assert recover_center(CellIndex(35, 35))[0] == 0.0
    assert recover_center(CellIndex(35, 35, 0.3, 0.0))[0] == pytest.approx(0.3)


def test_locate_cell_examples():
    c = locate_cell(-70.0, -70.0)
    assert (c.x_ch, c.y_ch, c.x_co, c.y_co) == (0, 0, 0.0, 0.0)
    x, y = recover_center(locate_cell(12.3, -4.7))
    assert abs(x - 12.3) <= 1e-9 and abs(y + 4.7) <= 1e-9
    with pytest.raises(ValueError):
        locate_cell(70.0, 0.0)


def test_cell_index_bounds():
    with pytest.raises(ValueError):
        CellIndex(70, 0)


def test_round_trip_1e5_points():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-70.0, 70.0, size=(100_000, 2))
    worst = 0.0
    for x, y in pts:
        c = locate_cell(x, y)
        assert 0 <= c.x_ch < 70 and 0 <= c.y_ch < 70
        rx, ry = recover_center(c)
        worst = max(worst, abs(rx - x), abs(ry - y))
    assert worst <= 1e-9


@given(st.floats(-70.0, 70.0, exclude_max=True), st.floats(-70.0, 70.0, exclude_max=True))
def test_round_trip_property(x, y):
    rx, ry = recover_center(locate_cell(x, y))
    assert abs(rx - x) <= 1e-9 and abs(ry - y) <= 1e-9


def test_vector_quantize_matches_scalar_route():
    rng = np.random.default_rng(9)
    pts = np.concatenate([rng.uniform(-70.0, 70.0, size=(5000, 2)),
                          np.round(rng.uniform(-70.0, 70.0, size=(500, 2)))])  # cell edges
    pts = pts[(pts < 70.0).all(axis=1)]
    qx, qy = quantize_centers(pts[:, 0], pts[:, 1])
    want = np.array([recover_center(locate_cell(x, y)) for x, y in pts])
    np.testing.assert_array_equal(np.stack([qx, qy], axis=1), want)


def _car(vid, x, y, role=Role.BACKGROUND):
    return VehicleState(vid, OrientedBox(Pose2D(x, y), 4.5, 1.9, 1.6), 0.0, 0.0, role)


def test_detect_noise_free_single_vehicle():
    w = WorldState(0, DT, (_car(0, 0, 0, Role.EGO), _car(1, 10.0, 5.0)), (), ())
    dets = detect(w, scan(w, 0), 0, DetectorConfig(sigma=0.0))
    assert len(dets) == 1
    d = dets.detections[0]
    assert d.xy == pytest.approx(recover_center(locate_cell(10.0, 5.0)), abs=1e-12)
    assert d.score >= 0.2 and d.object_id == 1


def test_detect_skips_occluded():
    truck = VehicleState(1, OrientedBox(Pose2D(10, 0), 10.0, 2.5, 3.5), 0.0, 0.0, Role.OCCLUDER)
    w = WorldState(0, DT, (_car(0, 0, 0, Role.EGO), truck, _car(2, 30, 0)), (), ())
    ids = [d.object_id for d in detect(w, scan(w, 0), 0)]
    assert 2 not in ids and 1 in ids


def test_detect_caps_at_fifty():
    # tangential cars on a 50 m ring, 0.7 m apart, all in plain view
    ring = [VehicleState(i + 1, OrientedBox(Pose2D(50 * math.cos(a), 50 * math.sin(a), a + math.pi / 2),
                                            4.5, 1.9, 1.6), 0.0, 0.0, Role.BACKGROUND)
            for i, a in enumerate(np.linspace(0, 2 * math.pi, 61)[:-1])]
    w = WorldState(0, DT, (_car(0, 0, 0, Role.EGO), *ring), (), ())
    cfg = DetectorConfig(hit_min=1, full_score_hits=4)
    cloud = scan(w, 0)
    visible = len({int(i) for i in cloud.hit_ids[cloud.valid]})
    assert visible == 60
    dets = detect(w, cloud, 0, cfg)
    assert len(dets) == 50
    scores = [d.score for d in dets]
    assert scores == sorted(scores, reverse=True) and min(scores) >= 0.2


def test_detect_monotone_in_hits():
    w = WorldState(0, DT, (_car(0, 0, 0, Role.EGO), _car(1, 20, 0), _car(2, -15, 3)), (), ())
    cloud = scan(w, 0)
    cfg = DetectorConfig(sigma=0.0)
    base = {d.object_id for d in detect(w, cloud, 0, cfg)}
    # drop half of vehicle 2's returns: never adds, and restoring never removes
    mask = cloud.valid.copy()
    idx = np.flatnonzero(cloud.hit_ids == 2)
    mask[idx[::2]] = False
    thinned = PointCloud(cloud.points, mask, cloud.hit_ids, 0, 0, cloud.sensor_pose)
    fewer = {d.object_id for d in detect(w, thinned, 0, cfg)}
    assert fewer <= base


def test_detection_list_invariants():
    d = Detection(0, 0, 0, 4.5, 1.9, 1.6, 0.0, 0.1)
    with pytest.raises(ValueError):
        DetectionList((d,), 0, 0)
    hi, lo = Detection(0, 0, 0, 4.5, 1.9, 1.6, 0.0, 0.9), Detection(0, 0, 0, 4.5, 1.9, 1.6, 0, 0.3)
    with pytest.raises(ValueError):
        DetectionList((lo, hi), 0, 0)
    assert len(DetectionList((hi, lo), 0, 0)) == 2
