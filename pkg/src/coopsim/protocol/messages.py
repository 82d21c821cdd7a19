"""Little-endian wire formats for both communication rounds.

Every message starts with a 12-byte header ``(u32 source_id, u32 tick,
u32 count)`` followed by ``count`` records of IEEE-754 single floats.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

HEADER = struct.Struct("<III")
HEADER_BYTES = HEADER.size
FLOAT_BYTES = 4
MAX_ROUND1_OBJECTS = 50
POINT_DOWNSAMPLE = 16
N_KEYPOINTS = 2048 // POINT_DOWNSAMPLE  # 128
FEATURE_DIM = 128
KEYPOINT_WIDTH = FEATURE_DIM + 3
_F32 = np.dtype("<f4")


class WireFormatError(ValueError):
    pass


def _split(data: bytes, width: int) -> tuple[int, int, np.ndarray]:
    if len(data) < HEADER_BYTES:
        raise WireFormatError("truncated header")
    source_id, tick, count = HEADER.unpack_from(data)
    body = data[HEADER_BYTES:]
    if len(body) != count * width * FLOAT_BYTES:
        raise WireFormatError(f"body is {len(body)} bytes, header promises {count} x {width} floats")
    return source_id, tick, np.frombuffer(body, dtype=_F32).reshape(count, width)


@dataclass(frozen=True)
class Round1Message:
    """Detected-object centers projected to the ground plane."""

    source_id: int
    tick: int
    centers: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.centers) > MAX_ROUND1_OBJECTS:
            raise ValueError("round-1 message carries at most 50 centers")

    @staticmethod
    def payload_size(count: int) -> int:
        return 2 * FLOAT_BYTES * count

    @classmethod
    def wire_size(cls, count: int) -> int:
        return HEADER_BYTES + cls.payload_size(count)

    def encode(self) -> bytes:
        body = np.asarray(self.centers, dtype=_F32).reshape(-1, 2)
        return HEADER.pack(self.source_id, self.tick, len(self.centers)) + body.tobytes()

    @classmethod
    def decode(cls, data: bytes) -> "Round1Message":
        src, tick, arr = _split(data, 2)
        return cls(src, tick, tuple((float(x), float(y)) for x, y in arr))


@dataclass(frozen=True)
class Round2Request:
    """Ego asks ``target_id`` for point features; the one-float payload is the target id."""

    source_id: int
    target_id: int
    tick: int

    PAYLOAD_BYTES = FLOAT_BYTES

    @classmethod
    def wire_size(cls) -> int:
        return HEADER_BYTES + cls.PAYLOAD_BYTES

    def encode(self) -> bytes:
        return HEADER.pack(self.source_id, self.tick, 1) + np.array([self.target_id], _F32).tobytes()

    @classmethod
    def decode(cls, data: bytes) -> "Round2Request":
        src, tick, arr = _split(data, 1)
        if arr.shape[0] != 1:
            raise WireFormatError("request carries exactly one float")
        return cls(src, int(arr[0, 0]), tick)


@dataclass(frozen=True, eq=False)
class Round2Message:
    """128 keypoints, each a 128-float feature followed by its xyz position."""

    source_id: int
    tick: int
    keypoints: np.ndarray

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=_F32)
        if kp.shape != (N_KEYPOINTS, KEYPOINT_WIDTH):
            raise ValueError(f"keypoints must be {N_KEYPOINTS}x{KEYPOINT_WIDTH}, got {kp.shape}")
        object.__setattr__(self, "keypoints", kp)

    PAYLOAD_BYTES = N_KEYPOINTS * KEYPOINT_WIDTH * FLOAT_BYTES  # 67,072

    @classmethod
    def wire_size(cls) -> int:
        return HEADER_BYTES + cls.PAYLOAD_BYTES

    @property
    def positions(self) -> np.ndarray:
        return self.keypoints[:, FEATURE_DIM:]

    def encode(self) -> bytes:
        return HEADER.pack(self.source_id, self.tick, N_KEYPOINTS) + self.keypoints.tobytes()

    @classmethod
    def decode(cls, data: bytes) -> "Round2Message":
        src, tick, arr = _split(data, KEYPOINT_WIDTH)
        return cls(src, tick, arr.copy())
