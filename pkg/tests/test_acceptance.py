"""Acceptance suite: one test per criterion, each with its runtime budget.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import Phase, given, settings
from hypothesis import strategies as st

from coopsim import campaign
from coopsim.campaign import CampaignSpec, run_campaign
from coopsim.lidar import PointCloud, scan
from coopsim.metrics import AVERAGE, sct
from coopsim.perception import DetectorConfig, detect, locate_cell, recover_center, voxelize
from coopsim.policy.planner import plan_astar
from coopsim.protocol import (Round1Message, Round2Message, Round2Request, bandwidth_totals,
                              build_selection_scope, object_utility, select_comm_scope,
                              select_random_scope, to_mbps, vehicle_utility)
from coopsim.protocol.exchange import Sensing, clear_sensing_cache
from coopsim.scenarios import COLLIDER_ID, EGO_ID, collider_hits, fig1_world
from coopsim.world import DT, EpisodeOutcome, OrientedBox, Pose2D, Role, Status, VehicleState, WorldState
from reference import bfs_arrival, plan_violations, voxel_counts

RESULTS: dict[int, str] = {}


@contextmanager
def criterion(n: int, title: str, budget: float):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException as e:
        first = str(e).strip().splitlines()[0] if str(e).strip() else type(e).__name__
        RESULTS[n] = f"FAIL  {n}. {title}: {first[:160]}"
        raise
    dt = time.perf_counter() - t0
    if dt > budget:
        RESULTS[n] = f"FAIL  {n}. {title}: {dt:.1f} s exceeds the {budget:g} s budget"
        pytest.fail(RESULTS[n])
    RESULTS[n] = f"PASS  {n}. {title} ({dt:.1f} s)"


# ---- 1 ------------------------------------------------------------------------

def test_criterion_1_bandwidth():
    with criterion(1, "bandwidth arithmetic", 1.0):
        stream = 128 * (128 + 3) * 4 * 10
        r1 = 50 * 2 * 4 * 10
        ran = bandwidth_totals(6, 3, "Random")
        s6 = bandwidth_totals(6, 3, "Selective")
        s10 = bandwidth_totals(10, 3, "Selective")
        assert stream == 670_720 and r1 == 4_000
        assert ran.per_vehicle_bytes_per_s[1] == stream
        assert s6.per_vehicle_bytes_per_s[6] == r1  # a scope member that does not stream
        assert s6.components["request"] == 120
        assert (ran.total_bytes_per_s, s6.total_bytes_per_s, s10.total_bytes_per_s) == \
            (2_012_160, 2_036_280, 2_052_280)
        for rep, want in ((ran, 15.30), (s6, 15.48), (s10, 15.60)):
            assert abs(rep.total_mbps - want) <= 0.35, (rep.total_mbps, want)
            assert rep.total_mbps == to_mbps(rep.total_bytes_per_s)
        overhead = 100 * (s6.total_bytes_per_s / ran.total_bytes_per_s - 1)
        assert abs(overhead - 1.20) <= 0.05, overhead
        assert s10.total_bytes_per_s - s6.total_bytes_per_s == 16_000


# ---- 2 ------------------------------------------------------------------------

def _selective_scope(world, seed):
    """Round 1 over the wire encoding, then the comm-scope choice."""
    sensing = Sensing(world, seed)
    ego_ref = sensing.detections(EGO_ID).centers() + [world.vehicle(EGO_ID).pose.xy]
    scope = build_selection_scope(world, EGO_ID, 6)
    util = {}
    for m in scope.members:
        msg = Round1Message(m, world.tick, tuple(sensing.detections(m).centers()))
        util[m] = vehicle_utility(Round1Message.decode(msg.encode()), ego_ref)
    return scope, select_comm_scope(util, 3, world, EGO_ID)


def test_criterion_2_fig1():
    with criterion(2, "four-candidate witness selection", 10.0):
        w, witness = fig1_world()
        scope = build_selection_scope(w, EGO_ID, 6)
        assert len(scope.members) == 4
        # occlusion certificate: the ego and every other candidate see nothing of the collider
        assert collider_hits(w, EGO_ID) == 0
        hits = {m: collider_hits(w, m) for m in scope.members}
        assert [m for m, h in hits.items() if h >= DetectorConfig().hit_min] == [witness], hits
        assert all(hits[m] == 0 for m in scope.members if m != witness)
        chosen = sum(witness in _selective_scope(w, seed)[1].members for seed in range(1000))
        assert chosen == 1000
        omitted = sum(
            witness not in select_random_scope(scope, 3, np.random.default_rng(seed)).members
            for seed in range(10_000))
        assert abs(omitted / 10_000 - 0.25) <= 0.03, omitted


# ---- 3 ------------------------------------------------------------------------

CASES = 1430  # seven properties, 10,010 cases in total
coord = st.floats(-100, 100, allow_nan=False)
point = st.tuples(coord, coord)
points = st.lists(point, max_size=50)
scores = st.dictionaries(st.integers(1, 12), st.integers(0, 50), min_size=1)
many = settings(max_examples=CASES, database=None, derandomize=True,
                phases=(Phase.explicit, Phase.generate, Phase.shrink))


def _world(positions):
    vs = [VehicleState(i, OrientedBox(Pose2D(x, y), 4.5, 1.9, 1.6), 0.0, 0.0,
                       Role.EGO if i == 0 else Role.BACKGROUND) for i, (x, y) in enumerate(positions)]
    return WorldState(0, DT, tuple(vs), (), ())


LINE = _world([(0, 0)] + [(3.0 * i, 1.0) for i in range(1, 13)])


def test_criterion_3_protocol_properties():
    count = [0]

    @many
    @given(point, st.sampled_from([(0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5)]))
    def boundary(ego, off):
        count[0] += 1
        obj = (ego[0] + off[0], ego[1] + off[1])
        if math.dist(obj, ego) == 0.5:
            assert object_utility(obj, [ego]) == 0
        assert object_utility(ego, [ego]) == 0

    @many
    @given(point, points)
    def vacuous(obj, msg):
        count[0] += 1
        assert object_utility(obj, []) == 1
        assert vehicle_utility(msg, []) == len(msg)

    @many
    @given(points, points, points)
    def additive(a, b, ego):
        count[0] += 1
        assert vehicle_utility(a + b, ego) == vehicle_utility(a, ego) + vehicle_utility(b, ego)
        assert vehicle_utility(a, ego) == sum(int(all(math.dist(o, e) > 0.5 for e in ego))
                                              for o in a)

    @many
    @given(st.lists(point, min_size=1, max_size=12), st.integers(1, 6), st.data())
    def subset(others, n_c, data):
        count[0] += 1
        w = _world([(0.0, 0.0)] + others)
        scope = build_selection_scope(w, 0, 6)
        util = {m: data.draw(st.integers(0, 50)) for m in scope.members}
        if not util:
            return
        comm = select_comm_scope(util, n_c, w, 0)
        assert set(comm.members) <= set(scope.members)
        assert len(comm.members) == min(n_c, len(scope.members))

    @many
    @given(scores, st.integers(1, 6), st.floats(0.01, 100), st.floats(-100, 100))
    def rescale(sc, n_c, a, b):
        count[0] += 1
        plain = select_comm_scope(sc, n_c, LINE, 0)
        scaled = select_comm_scope({k: a * v ** 3 + b for k, v in sc.items()}, n_c, LINE, 0)
        assert set(plain.members) == set(scaled.members)

    @many
    @given(st.lists(st.tuples(st.floats(-1e4, 1e4, width=32), st.floats(-1e4, 1e4, width=32)),
                    max_size=50), st.integers(0, 2 ** 32 - 1), st.integers(0, 2 ** 32 - 1))
    def round1_size(centers, src, tick):
        count[0] += 1
        data = Round1Message(src, tick, tuple(centers)).encode()
        assert len(data) == 12 + 2 * 4 * len(centers)
        assert Round1Message.payload_size(len(centers)) == 8 * len(centers)
        assert Round1Message.decode(data).centers == tuple(centers)

    @many
    @given(st.integers(0, 2 ** 32 - 1), st.integers(0, 2 ** 32 - 1), st.integers(0, 2 ** 32 - 1),
           st.integers(0, 2 ** 32 - 1))
    def round2_sizes(src, tgt, tick, seed):
        count[0] += 1
        req = Round2Request(src, tgt, tick).encode()
        assert len(req) == 12 + 4 == 12 + Round2Request.PAYLOAD_BYTES
        kp = np.random.default_rng(seed).normal(size=(128, 131))
        data = Round2Message(src, tick, kp).encode()
        assert len(data) == 12 + 128 * 131 * 4 == 12 + Round2Message.PAYLOAD_BYTES

    with criterion(3, "protocol properties (>= 10,000 cases)", 30.0):
        for prop in (boundary, vacuous, additive, subset, rescale, round1_size, round2_sizes):
            prop()
        assert count[0] >= 10_000, count[0]
        print(f"{count[0]} property cases")


# ---- 4 ------------------------------------------------------------------------

def _cloud(pts):
    pts = np.asarray(pts, dtype=float)
    return PointCloud(pts, np.ones(len(pts), bool), np.full(len(pts), -1), 0, 0, Pose2D(0, 0))


def _expected_ids(cloud, cfg):
    ids, n = np.unique(cloud.hit_ids[cloud.valid & (cloud.hit_ids >= 0)], return_counts=True)
    keep = [(-min(1.0, c / cfg.full_score_hits), int(i)) for i, c in zip(ids, n)
            if c >= cfg.hit_min and min(1.0, c / cfg.full_score_hits) >= cfg.threshold]
    return [i for _, i in sorted(keep)][:cfg.max_objects]


def test_criterion_4_perception_geometry():
    with criterion(4, "perception geometry", 30.0):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for x, y in rng.uniform(-70.0, 70.0, size=(100_000, 2)):
            rx, ry = recover_center(locate_cell(x, y))
            worst = max(worst, abs(rx - x), abs(ry - y))
        assert worst <= 1e-9, worst

        for seed in range(100):
            r = np.random.default_rng(seed)
            n = int(r.integers(1, 3000))
            centers = r.uniform([-75, -75, -0.5], [75, 75, 5.5], size=(max(1, n // 20), 3))
            pts = centers[r.integers(len(centers), size=n)] + r.normal(scale=0.3, size=(n, 3))
            grid = voxelize(_cloud(pts))
            want = np.zeros(grid.occupancy.shape, dtype=bool)
            for key, c in voxel_counts(pts).items():
                want[key] = c >= 3
            assert np.array_equal(grid.occupancy, want), seed

        # 60 cars in plain view on a ring, plus a scatter of far ones with few returns
        ring = [VehicleState(i + 1, OrientedBox(Pose2D(50 * math.cos(a), 50 * math.sin(a),
                                                       a + math.pi / 2), 4.5, 1.9, 1.6),
                             0.0, 0.0, Role.BACKGROUND)
                for i, a in enumerate(np.linspace(0, 2 * math.pi, 61)[:-1])]
        ego = VehicleState(0, OrientedBox(Pose2D(0, 0), 4.5, 1.9, 1.6), 0.0, 0.0, Role.EGO)
        w = WorldState(0, DT, (ego, *ring), (), ())
        cloud = scan(w, 0)
        for cfg in (DetectorConfig(hit_min=1, full_score_hits=4), DetectorConfig(hit_min=1),
                    DetectorConfig()):
            dets = detect(w, cloud, 0, cfg)
            assert len(dets) <= 50
            assert all(d.score >= 0.2 for d in dets)
            assert [d.object_id for d in dets] == _expected_ids(cloud, cfg)
        assert len(detect(w, cloud, 0, DetectorConfig(hit_min=1, full_score_hits=4))) == 50
        # score threshold at its boundary: 3 of 20 hits is 0.15, 4 of 20 is exactly 0.2
        pts = np.tile([10.0, 0.0, 0.5], (7, 1))
        tagged = PointCloud(pts, np.ones(7, bool), np.array([1, 1, 1, 2, 2, 2, 2]), 0, 0, Pose2D(0, 0))
        dets = detect(w, tagged, 0, DetectorConfig(hit_min=1, full_score_hits=20))
        assert [(d.object_id, d.score) for d in dets] == [(2, 0.2)]


# ---- 5 ------------------------------------------------------------------------

def test_criterion_5_planner_equivalence():
    with criterion(5, "A* vs space-time BFS on 200 grids", 60.0):
        rng = np.random.default_rng(55)
        found = 0
        for _ in range(200):
            nx, ny = int(rng.integers(1, 16)), int(rng.integers(1, 16))
            horizon = int(rng.integers(1, 20))  # at most 20 time layers
            blocked = rng.random((horizon + 1, nx, ny)) < rng.uniform(0.0, 0.5)
            start = (int(rng.integers(nx)), int(rng.integers(ny)))
            goal = (int(rng.integers(nx)), int(rng.integers(ny)))
            plan = plan_astar(start, goal, lambda c, t: bool(blocked[t, c[0], c[1]]), horizon,
                              shape=(nx, ny))
            assert (plan.arrival if plan else None) == bfs_arrival(blocked, start, goal, horizon)
            if plan:
                found += 1
                assert plan.cells[0] == (*start, 0) and plan.cells[-1][:2] == goal
                assert plan_violations(plan, blocked) == []
        assert found >= 50  # the sample exercises both outcomes


# ---- 6 and 8 ------------------------------------------------------------------

@pytest.fixture(scope="module")
def full_matrix(tmp_path_factory):
    campaign._ORACLE_CACHE.clear()
    clear_sensing_cache()
    out = tmp_path_factory.mktemp("matrix")
    t0 = time.perf_counter()
    res = run_campaign(CampaignSpec(), out_dir=out)
    elapsed = time.perf_counter() - t0
    nocomm = run_campaign(CampaignSpec(strategies=("NoComm",)), out_dir=out / "nocomm")
    return res, nocomm, elapsed


def _paired_sr(res, a, b):
    pairs = res.paired(a, b)
    sa = sum(x.outcome.status is Status.SUCCESS for x, _ in pairs) / len(pairs)
    sb = sum(y.outcome.status is Status.SUCCESS for _, y in pairs) / len(pairs)
    return len(pairs), sa, sb


def test_criterion_6_solvability_and_ordering(full_matrix):
    res, nocomm, elapsed = full_matrix
    with criterion(6, "oracle solvability, SR ordering, 972 episodes < 10 min", math.inf):
        oracle = [r for r in res.records if r.strategy == "Oracle"]
        assert len(oracle) == 243 and len(res.records) == 972
        assert all(r.outcome.status is Status.SUCCESS for r in oracle)
        n, sel6, ran6 = _paired_sr(res, ("Selective", 6), ("Random", 6))
        assert n == 243 and sel6 >= ran6, (sel6, ran6)
        n, sel10, sel6b = _paired_sr(res, ("Selective", 10), ("Selective", 6))
        assert n == 243 and sel10 >= sel6b, (sel10, sel6b)
        none = [r for r in nocomm.records if r.strategy == "NoComm"]
        rand = {(r.family, r.config_index, r.seed): r for r in res.records if r.strategy == "Random"}
        assert len(none) == 243
        sr_none = sum(r.outcome.status is Status.SUCCESS for r in none) / 243
        sr_rand = sum(r.outcome.status is Status.SUCCESS for r in rand.values()) / 243
        assert sr_none < sr_rand, (sr_none, sr_rand)
        assert elapsed < 600.0, f"full matrix took {elapsed:.0f} s"


def test_criterion_8_sct_and_rate_identity(full_matrix):
    res, nocomm, _ = full_matrix
    with criterion(8, "SCT arithmetic and SR + CR + stagnation = 1", 5.0):
        assert sct(EpisodeOutcome(Status.SUCCESS, 12.5, 125), 10.0) == pytest.approx(0.8)
        assert sct(EpisodeOutcome(Status.COLLISION, 4.0, 40), 10.0) == 0.0
        assert sct(EpisodeOutcome(Status.STAGNATION, 60.0, 600), 10.0) == 0.0
        assert sct(EpisodeOutcome(Status.SUCCESS, 10.0, 100), 10.0) == 1.0
        groups = res.groups + nocomm.groups
        assert len([g for g in res.groups if g.family != AVERAGE]) == 12
        for g in groups:
            assert g.successes + g.collisions + g.stagnations == g.episodes
            assert g.sr + g.cr + g.stagnation == pytest.approx(1.0, abs=1e-12)


# ---- 7 ------------------------------------------------------------------------

def test_criterion_7_determinism(tmp_path):
    spec = dict(configs=(0, 13, 26), seeds=1, strategies=("Selective", "Random", "NoComm"))
    with criterion(7, "determinism and transport equivalence", math.inf):
        outs = []
        for name, extra in (("a", {}), ("b", {}), ("udp", {"transport": "udp"})):
            campaign._ORACLE_CACHE.clear()
            clear_sensing_cache()
            run_campaign(CampaignSpec(**spec, **extra), out_dir=tmp_path / name)
            outs.append(tmp_path / name)
        a, b, udp = outs
        body = lambda p: p.read_bytes().split(b"\n", 1)[1]
        assert body(a / "campaign.csv") == body(b / "campaign.csv")
        assert (a / "episodes.csv").read_bytes() == (b / "episodes.csv").read_bytes()
        # same payload digests, outcomes and byte counts over UDP
        assert (a / "episodes.csv").read_bytes() == (udp / "episodes.csv").read_bytes()
        assert body(a / "campaign.csv") == body(udp / "campaign.csv")
