"""Synchronous worker client: compress, submit, wait for the broadcast, recover."""

from __future__ import annotations

import socket

import numpy as np

from homagg.aggregation.protocol import (AggregationNack, Frame, FrameType, NackReason,
                                         ProtocolError, parse_address, recv_frame, send_frame)
from homagg.codec import IndexSpec, RecoveryStats, compress, recover
from homagg.countsketch import SketchConfig
from homagg.wire import CompressedGradient, deserialize, serialize

DEFAULT_TIMEOUT = 30.0


def submit_round(server: str, worker_id: int, cg: CompressedGradient, round_id: int = 0,
                 timeout: float = DEFAULT_TIMEOUT) -> bytes:
    """Send one SUBMIT and return the broadcast payload bytes."""
    host, port = parse_address(server)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.settimeout(timeout)
        send_frame(sock, Frame(FrameType.SUBMIT, round_id, worker_id, serialize(cg)))
        try:
            reply = recv_frame(sock)
        except socket.timeout:
            raise TimeoutError(f"no broadcast for round {round_id} within {timeout}s") from None
    if reply.type == FrameType.NACK:
        raise AggregationNack(NackReason(reply.payload[0]))
    if reply.type != FrameType.RESULT or reply.round_id != round_id:
        raise ProtocolError(f"unexpected reply {reply.type.name} for round {reply.round_id}")
    return reply.payload


def worker_round(server: str, worker_id: int, g: np.ndarray, cfg: SketchConfig,
                 index: IndexSpec | str = "bitmap", round_id: int = 0,
                 timeout: float = DEFAULT_TIMEOUT) -> tuple[np.ndarray, RecoveryStats]:
    """One aggregation round from a worker's point of view."""
    payload = submit_round(server, worker_id, compress(g, cfg, index), round_id, timeout)
    merged = deserialize(payload, block_rows=cfg.block_rows, gamma=cfg.gamma)
    return recover(merged)
