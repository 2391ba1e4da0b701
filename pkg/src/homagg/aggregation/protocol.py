"""Binary framing shared by the aggregator and its workers.

Frame: magic u16 0xA66A | version u8 | type u8 | round_id u64 | worker_id u16 |
payload_len u32 | payload. Integers are little-endian.
"""

from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass

FRAME_MAGIC = 0xA66A
FRAME_VERSION = 1
FRAME_HEADER = struct.Struct("<HBBQHI")
MAX_PAYLOAD = 1 << 31


class FrameType(enum.IntEnum):
    SUBMIT = 0x01
    RESULT = 0x02
    NACK = 0x03


class NackReason(enum.IntEnum):
    SIZE_MISMATCH = 0x01
    HEADER_MISMATCH = 0x02
    DUPLICATE = 0x03


class ProtocolError(RuntimeError):
    """Malformed frame or unexpected frame type on the wire."""


class AggregationNack(RuntimeError):
    def __init__(self, reason: NackReason):
        super().__init__(f"aggregator rejected submission: {reason.name.lower()}")
        self.reason = reason


@dataclass(frozen=True)
class Frame:
    type: FrameType
    round_id: int
    worker_id: int
    payload: bytes = b""

    def encode(self) -> bytes:
        head = FRAME_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, int(self.type), self.round_id,
                                 self.worker_id, len(self.payload))
        return head + self.payload

    @classmethod
    def nack(cls, round_id: int, worker_id: int, reason: NackReason) -> Frame:
        return cls(FrameType.NACK, round_id, worker_id, bytes([int(reason)]))


def parse_header(head: bytes) -> tuple[FrameType, int, int, int]:
    """Validate a frame header; returns ``(type, round_id, worker_id, payload_len)``."""
    magic, version, ftype, round_id, worker_id, length = FRAME_HEADER.unpack(head)
    if magic != FRAME_MAGIC:
        raise ProtocolError(f"bad frame magic {magic:#06x}")
    if version != FRAME_VERSION:
        raise ProtocolError(f"unsupported frame version {version}")
    try:
        ftype = FrameType(ftype)
    except ValueError:
        raise ProtocolError(f"unknown frame type {ftype:#04x}") from None
    if length > MAX_PAYLOAD:
        raise ProtocolError("payload too large")
    return ftype, round_id, worker_id, length


def decode_frame(data: bytes) -> Frame:
    if len(data) < FRAME_HEADER.size:
        raise ProtocolError("truncated frame header")
    ftype, round_id, worker_id, length = parse_header(data[:FRAME_HEADER.size])
    payload = data[FRAME_HEADER.size:]
    if len(payload) != length:
        raise ProtocolError("payload length disagrees with frame header")
    return Frame(ftype, round_id, worker_id, bytes(payload))


def _recv_exactly(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        buf += chunk
    return bytes(buf)


def recv_frame(sock: socket.socket) -> Frame:
    ftype, round_id, worker_id, length = parse_header(_recv_exactly(sock, FRAME_HEADER.size))
    return Frame(ftype, round_id, worker_id, _recv_exactly(sock, length))


def send_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(frame.encode())


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must be HOST:PORT, got {addr!r}")
    return host.strip("[]"), int(port)
