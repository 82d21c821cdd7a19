"""Message transports.

Both transports deliver one message at a time: ``deliver`` hands the bytes to
the destination and returns what the destination received. The UDP transport
pushes every message through a real loopback socket pair, splitting it into
datagrams because a round-2 message is larger than the UDP limit.
"""

from __future__ import annotations

import socket
import struct

_FRAG = struct.Struct("<IIHH")  # src, message seq, fragment index, fragment count
FRAGMENT_BYTES = 32_000


class TransportError(RuntimeError):
    pass


class InProcTransport:
    name = "inproc"

    def __init__(self):
        self.delivered = 0

    def deliver(self, src: int, dst: int, data: bytes) -> bytes:
        self.delivered += 1
        return bytes(data)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class UdpTransport:
    """One loopback UDP socket per vehicle, bound lazily on first use."""

    name = "udp"

    def __init__(self, host: str = "127.0.0.1", timeout: float = 2.0):
        self.host = host
        self.timeout = timeout
        self._socks: dict[int, socket.socket] = {}
        self._seq = 0
        self.delivered = 0

    def _sock(self, vid: int) -> socket.socket:
        s = self._socks.get(vid)
        if s is None:
            s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            s.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 20)
            s.bind((self.host, 0))
            s.settimeout(self.timeout)
            self._socks[vid] = s
        return s

    def deliver(self, src: int, dst: int, data: bytes) -> bytes:
        tx, rx = self._sock(src), self._sock(dst)
        self._seq += 1
        seq = self._seq
        n = max(1, -(-len(data) // FRAGMENT_BYTES))
        addr = rx.getsockname()
        for i in range(n):
            chunk = data[i * FRAGMENT_BYTES:(i + 1) * FRAGMENT_BYTES]
            tx.sendto(_FRAG.pack(src, seq, i, n) + chunk, addr)
        parts: dict[int, bytes] = {}
        while len(parts) < n:
            try:
                dgram, _ = rx.recvfrom(FRAGMENT_BYTES + _FRAG.size)
            except socket.timeout as exc:
                raise TransportError(f"lost fragment of message {seq} from {src} to {dst}") from exc
            fsrc, fseq, idx, count = _FRAG.unpack_from(dgram)
            if fseq != seq or fsrc != src or count != n:
                continue  # stale datagram from an earlier timeout
            parts[idx] = dgram[_FRAG.size:]
        self.delivered += 1
        return b"".join(parts[i] for i in range(n))

    def close(self) -> None:
        for s in self._socks.values():
            s.close()
        self._socks.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_transport(name: str):
    if name == "inproc":
        return InProcTransport()
    if name == "udp":
        return UdpTransport()
    raise ValueError(f"unknown transport {name!r}")
