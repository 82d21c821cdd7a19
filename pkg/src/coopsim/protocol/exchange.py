"""Per-tick two-round exchange between the ego and its neighbours."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..lidar import LidarConfig, PointCloud, scan
from ..perception import Detection, DetectionList, DetectorConfig, detect
from ..world import WorldState
from .bandwidth import REQUEST, ROUND1, ROUND2, BandwidthLedger
from .features import build_round2
from .messages import Round1Message, Round2Message, Round2Request
from .selection import (DEFAULT_COMM_RANGE, CommScope, SelectionScope, StickyRandomSelector,
                        Strategy, build_selection_scope, object_utility, select_comm_scope,
                        vehicle_utility)
from .transport import InProcTransport


def tick_rng(seed: int, tick: int, vid: int) -> np.random.Generator:
    return np.random.default_rng([seed, tick, vid])


class _Memo:
    """Bounded least-recently-used store."""

    def __init__(self, size: int):
        self.size = size
        self._data: OrderedDict = OrderedDict()

    def get(self, key):
        if key in self._data:
            self._data.move_to_end(key)
            return self._data[key]
        return None

    def put(self, key, value) -> None:
        self._data[key] = value
        if len(self._data) > self.size:
            self._data.popitem(last=False)

    def clear(self) -> None:
        self._data.clear()


# Scans, detections and features are pure in (geometry, seed, tick, vehicle), so
# episodes that pass through the same state (Selective at N_s = 6 and 10 on one
# config, say) share them. The bounds keep about one campaign cell in memory.
_DETECTIONS = _Memo(8000)
_FEATURES = _Memo(1500)


def clear_sensing_cache() -> None:
    _DETECTIONS.clear()
    _FEATURES.clear()


class Sensing:
    """Lazy per-tick lidar scan, detection and round-2 features for any vehicle, memoized."""

    def __init__(self, world: WorldState, seed: int, lidar: LidarConfig = LidarConfig(),
                 detector: DetectorConfig = DetectorConfig()):
        self.world = world
        self.seed = seed
        self.lidar = lidar
        self.detector = detector
        self._clouds: dict[int, PointCloud] = {}
        a = world.box_arrays
        geometry = b"".join(a[k].tobytes() for k in sorted(a))
        self._key = (seed, world.tick, lidar, detector, geometry)

    def cloud(self, vid: int) -> PointCloud:
        if vid not in self._clouds:
            s = int(np.random.SeedSequence([self.seed, self.world.tick, vid, 1]).generate_state(1)[0])
            self._clouds[vid] = scan(self.world, vid, self.lidar, seed=s)
        return self._clouds[vid]

    def detections(self, vid: int) -> DetectionList:
        key = (self._key, vid)
        dets = _DETECTIONS.get(key)
        if dets is None:
            rng = tick_rng(self.seed, self.world.tick, vid)
            dets = detect(self.world, self.cloud(vid), vid, self.detector, rng)
            _DETECTIONS.put(key, dets)
        return dets

    def round2(self, vid: int) -> Round2Message:
        key = (self._key, vid)
        msg = _FEATURES.get(key)
        if msg is None:
            msg = build_round2(self.cloud(vid))
            _FEATURES.put(key, msg)
        return msg


def fuse(ego_dets: DetectionList, others: list[DetectionList]) -> tuple[Detection, ...]:
    """Ego detections first, then each partner's in order, dropping centers within 0.5 m."""
    fused = list(ego_dets)
    centers = [d.xy for d in fused]
    for dl in others:
        for d in dl:
            if object_utility(d.xy, centers):
                fused.append(d)
                centers.append(d.xy)
    return tuple(fused)


@dataclass
class ExchangeResult:
    scope: SelectionScope
    comm_scope: CommScope
    fused: tuple[Detection, ...]
    utilities: dict[int, int] = field(default_factory=dict)
    round2: dict[int, Round2Message] = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return self.scope.degenerate


class Exchanger:
    """Runs the exchange every tick of one episode and owns its byte ledger."""

    def __init__(self, strategy: Strategy | str, n_s: int, n_c: int, seed: int = 0,
                 comm_range: float = DEFAULT_COMM_RANGE, transport=None,
                 ledger: Optional[BandwidthLedger] = None):
        self.strategy = Strategy(strategy)
        if self.strategy not in (Strategy.SELECTIVE, Strategy.RANDOM, Strategy.NOCOMM):
            raise ValueError(f"{self.strategy.value} does not exchange messages")
        self.n_s, self.n_c, self.seed = n_s, n_c, seed
        self.comm_range = comm_range
        self.transport = transport if transport is not None else InProcTransport()
        self.ledger = ledger if ledger is not None else BandwidthLedger()
        self.random = StickyRandomSelector(seed)
        self.degenerate_ticks = 0

    def _send(self, kind: str, src: int, dst: int, data: bytes, payload: int) -> bytes:
        got = self.transport.deliver(src, dst, data)
        self.ledger.record(kind, src, dst, data, payload)
        return got

    def run(self, world: WorldState, ego: int, sensing: Optional[Sensing] = None) -> ExchangeResult:
        sensing = sensing or Sensing(world, self.seed)
        tick = world.tick
        ego_dets = sensing.detections(ego)
        self.ledger.frame()
        if self.strategy is Strategy.NOCOMM:
            empty = SelectionScope(ego, ())
            return ExchangeResult(empty, CommScope(()), tuple(ego_dets))
        scope = build_selection_scope(world, ego, self.n_s, self.comm_range)
        if scope.degenerate:
            self.degenerate_ticks += 1
        utilities: dict[int, int] = {}
        if self.strategy is Strategy.SELECTIVE:
            ego_ref = ego_dets.centers() + [world.vehicle(ego).pose.xy]
            for m in scope.members:
                msg = Round1Message(m, tick, tuple(sensing.detections(m).centers()))
                got = Round1Message.decode(self._send(ROUND1, m, ego, msg.encode(),
                                                      Round1Message.payload_size(len(msg.centers))))
                utilities[m] = vehicle_utility(got, ego_ref)
            comm = (select_comm_scope(utilities, self.n_c, world, ego) if utilities
                    else CommScope(()))
        else:
            comm = self.random.select(scope, self.n_c)
        round2: dict[int, Round2Message] = {}
        for c in comm.members:
            if self.strategy is Strategy.SELECTIVE:
                req = Round2Request(ego, c, tick)
                got = Round2Request.decode(self._send(REQUEST, ego, c, req.encode(),
                                                      Round2Request.PAYLOAD_BYTES))
                if got.target_id != c:
                    raise RuntimeError("request delivered to the wrong vehicle")
            msg = sensing.round2(c)
            round2[c] = Round2Message.decode(self._send(ROUND2, c, ego, msg.encode(),
                                                        Round2Message.PAYLOAD_BYTES))
        fused = fuse(ego_dets, [sensing.detections(c) for c in comm.members])
        return ExchangeResult(scope, comm, fused, utilities, round2)


def run_exchange(world: WorldState, ego: int, strategy: Strategy | str, n_s: int, n_c: int,
                 seed: int = 0, transport=None, comm_range: float = DEFAULT_COMM_RANGE):
    """One-shot exchange; returns (comm scope, fused detections, bandwidth report)."""
    ex = Exchanger(strategy, n_s, n_c, seed, comm_range, transport)
    res = ex.run(world, ego)
    return res.comm_scope, res.fused, ex.ledger.report()
