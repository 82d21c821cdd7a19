"""Closed-form bandwidth budget and the per-episode byte ledger.

Rates are payload bytes per second at the 10 Hz frame rate; headers are
tracked separately as wire bytes. Mbps uses 1 Mbit = 2**20 bits.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, field

from .messages import MAX_ROUND1_OBJECTS, Round1Message, Round2Message, Round2Request
from .selection import Strategy

FRAME_RATE_HZ = 10
BITS_PER_MBIT = 2 ** 20

ROUND1 = "round1"
REQUEST = "request"
ROUND2 = "round2"
KINDS = (ROUND1, REQUEST, ROUND2)


def to_mbps(bytes_per_s: float) -> float:
    return bytes_per_s * 8 / BITS_PER_MBIT


@dataclass(frozen=True)
class BandwidthReport:
    per_vehicle_bytes_per_s: dict[int, float]
    total_bytes_per_s: float
    single_vehicle_bytes_per_s: float
    components: dict[str, float] = field(default_factory=dict)
    wire_bytes_per_s: float = 0.0
    payload_digest: str = ""

    @property
    def single_vehicle_mbps(self) -> float:
        return to_mbps(self.single_vehicle_bytes_per_s)

    @property
    def total_mbps(self) -> float:
        return to_mbps(self.total_bytes_per_s)


def bandwidth_totals(n_s: int, n_c: int, strategy: Strategy | str,
                     rate_hz: int = FRAME_RATE_HZ,
                     max_objects: int = MAX_ROUND1_OBJECTS) -> BandwidthReport:
    """Worst-case steady-state budget for one ego.

    Keys of ``per_vehicle_bytes_per_s``: 0 is the ego (requests), 1..n_s are
    scope members in selection order, the first n_c of which stream features.
    """
    strategy = Strategy(strategy)
    stream = Round2Message.PAYLOAD_BYTES * rate_hz
    per_vehicle: dict[int, float] = {}
    if strategy is Strategy.RANDOM:
        r1, req = 0, 0
        for i in range(1, n_c + 1):
            per_vehicle[i] = stream
        senders = n_c
    elif strategy is Strategy.SELECTIVE:
        n_c = min(n_c, n_s)
        r1 = Round1Message.payload_size(max_objects) * rate_hz
        req = Round2Request.PAYLOAD_BYTES * n_c * rate_hz
        per_vehicle[0] = req
        for i in range(1, n_s + 1):
            per_vehicle[i] = r1 + (stream if i <= n_c else 0)
        senders = n_c
    else:
        return BandwidthReport({}, 0.0, 0.0, dict.fromkeys(KINDS, 0.0))
    total = float(sum(per_vehicle.values()))
    single = (r1 + req + stream) if senders else 0.0
    components = {ROUND1: float(r1 * (n_s if strategy is Strategy.SELECTIVE else 0)),
                  REQUEST: float(req), ROUND2: float(stream * senders)}
    return BandwidthReport(per_vehicle, total, float(single), components)


class BandwidthLedger:
    """Accumulates every transmitted message of one episode."""

    def __init__(self, rate_hz: int = FRAME_RATE_HZ):
        self.rate_hz = rate_hz
        self.frames = 0
        self.payload = defaultdict(int)  # kind -> bytes
        self.wire = defaultdict(int)
        self.messages = defaultdict(int)  # kind -> count
        self.sent_by = defaultdict(int)  # vehicle id -> payload bytes
        self._digest = hashlib.sha256()

    def frame(self) -> None:
        self.frames += 1

    def record(self, kind: str, src: int, dst: int, data: bytes, payload_bytes: int) -> None:
        self.payload[kind] += payload_bytes
        self.wire[kind] += len(data)
        self.messages[kind] += 1
        self.sent_by[src] += payload_bytes
        self._digest.update(f"{kind}:{src}:{dst}:{len(data)}|".encode())
        self._digest.update(data)

    @property
    def total_wire_bytes(self) -> int:
        return sum(self.wire.values())

    @property
    def total_payload_bytes(self) -> int:
        return sum(self.payload.values())

    def digest(self) -> str:
        return self._digest.hexdigest()

    def report(self) -> BandwidthReport:
        frames = max(self.frames, 1)
        scale = self.rate_hz / frames
        per_vehicle = {vid: b * scale for vid, b in sorted(self.sent_by.items())}
        comps = {k: self.payload[k] * scale for k in KINDS}

        def per_message(kind):
            n = self.messages[kind]
            return self.payload[kind] / n * self.rate_hz if n else 0.0

        single = per_message(ROUND1) + comps[REQUEST] + per_message(ROUND2)
        return BandwidthReport(per_vehicle, self.total_payload_bytes * scale, single, comps,
                               self.total_wire_bytes * scale, self.digest())
