"""Framed-TCP aggregator that merges compressed gradients without decoding them.

Per round it validates every submission's header against the first one,
folds it into the partial result with exactly one merge, and once the k-th
distinct worker has submitted broadcasts the merged payload to every
participant of the round.
"""

from __future__ import annotations

import asyncio
import logging
import threading
import time
from dataclasses import dataclass, field

from homagg.aggregation.protocol import (FRAME_HEADER, Frame, FrameType, NackReason,
                                         ProtocolError, parse_address, parse_header)
from homagg.wire import (CompressedGradient, HeaderMismatch, PayloadError, compatible,
                         deserialize, merge, serialize, zero_like)

log = logging.getLogger(__name__)


@dataclass
class RoundState:
    partial: CompressedGradient
    started: float
    participants: dict[int, asyncio.StreamWriter] = field(default_factory=dict)
    merges: int = 0


class Aggregator:
    """Round bookkeeping; transport-independent so it can be driven directly."""

    def __init__(self, workers: int, block_rows: int = 0, round_timeout: float = 60.0):
        if workers < 1:
            raise ValueError("expected worker count must be >= 1")
        self.workers = workers
        self.block_rows = block_rows
        self.round_timeout = round_timeout
        self.rounds: dict[int, RoundState] = {}
        self.completed = 0

    def submit(self, round_id: int, worker_id: int, payload: bytes,
               writer=None) -> tuple[NackReason | None, bytes | None, dict]:
        """Apply one submission.

        Returns ``(nack, broadcast, participants)``: a NACK reason, or the
        merged payload when this submission completed the round.
        """
        try:
            cg = deserialize(payload, block_rows=self.block_rows)
        except PayloadError:
            return NackReason.SIZE_MISMATCH, None, {}
        state = self.rounds.get(round_id)
        if state is None:
            state = RoundState(zero_like(cg), time.monotonic())
            self.rounds[round_id] = state
        if worker_id in state.participants:
            return NackReason.DUPLICATE, None, {}
        if not compatible(state.partial, cg):
            return NackReason.HEADER_MISMATCH, None, {}
        try:
            state.partial = merge(state.partial, cg)
        except HeaderMismatch:
            return NackReason.HEADER_MISMATCH, None, {}
        state.merges += 1
        state.participants[worker_id] = writer
        if len(state.participants) < self.workers:
            return None, None, {}
        del self.rounds[round_id]
        self.completed += 1
        return None, serialize(state.partial), state.participants

    def expire(self, now: float | None = None) -> list[int]:
        """Drop rounds older than the timeout; returns their ids."""
        now = time.monotonic() if now is None else now
        stale = [r for r, s in self.rounds.items() if now - s.started > self.round_timeout]
        for r in stale:
            del self.rounds[r]
        return stale


class AggregatorServer:
    def __init__(self, bind: str, workers: int, block_rows: int = 0,
                 round_timeout: float = 60.0):
        self.host, self.port = parse_address(bind)
        self.state = Aggregator(workers, block_rows, round_timeout)
        self._server: asyncio.base_events.Server | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._ready = threading.Event()

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer = writer.get_extra_info("peername")
        try:
            while True:
                head = await reader.readexactly(FRAME_HEADER.size)
                ftype, round_id, worker_id, length = parse_header(head)
                payload = await reader.readexactly(length)
                if ftype != FrameType.SUBMIT:
                    raise ProtocolError(f"unexpected {ftype.name} frame from worker")
                nack, result, participants = self.state.submit(round_id, worker_id, payload,
                                                               writer)
                if nack is not None:
                    log.info("round %d worker %d: NACK %s", round_id, worker_id, nack.name)
                    writer.write(Frame.nack(round_id, worker_id, nack).encode())
                    await writer.drain()
                elif result is not None:
                    log.info("round %d complete, broadcasting %d bytes", round_id, len(result))
                    await self._broadcast(round_id, result, participants)
        except (asyncio.IncompleteReadError, ConnectionError):
            pass
        except ProtocolError as exc:
            log.warning("closing %s: %s", peer, exc)
        finally:
            writer.close()

    async def _broadcast(self, round_id: int, result: bytes, participants: dict):
        for worker_id, w in participants.items():
            if w is None or w.is_closing():
                continue
            w.write(Frame(FrameType.RESULT, round_id, worker_id, result).encode())
        for w in participants.values():
            if w is not None and not w.is_closing():
                try:
                    await w.drain()
                except ConnectionError:
                    pass

    async def _reaper(self):
        while True:
            await asyncio.sleep(min(1.0, self.state.round_timeout / 4))
            for r in self.state.expire():
                log.warning("round %d timed out; state discarded", r)

    async def serve_async(self):
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        self._loop = asyncio.get_running_loop()
        reaper = asyncio.create_task(self._reaper())
        self._ready.set()
        try:
            async with self._server:
                await self._server.serve_forever()
        finally:
            reaper.cancel()

    def serve_forever(self):
        try:
            asyncio.run(self.serve_async())
        except asyncio.CancelledError:
            pass

    def start(self) -> AggregatorServer:
        """Serve from a daemon thread; returns once the socket is bound."""
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        if not self._ready.wait(10):
            raise RuntimeError("aggregator failed to start")
        return self

    def stop(self):
        if self._loop and self._server:
            self._loop.call_soon_threadsafe(self._server.close)
            for task in asyncio.all_tasks(self._loop):
                self._loop.call_soon_threadsafe(task.cancel)
        if self._thread:
            self._thread.join(5)


def serve(bind: str, workers: int, block_rows: int = 0, round_timeout: float = 60.0):
    """Run an aggregator in the foreground until interrupted."""
    AggregatorServer(bind, workers, block_rows, round_timeout).serve_forever()
