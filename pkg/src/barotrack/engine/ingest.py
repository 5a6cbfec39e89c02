"""Packet ingestion: per-device reordering, 30 Hz alignment, socket sources.

Everything here is driven by explicit arrival timestamps so a recorded
session replays through exactly the same code path and decisions.
"""

from __future__ import annotations

import collections
import socket
import threading
import time
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from ..errors import BarotrackError
from ..sensors import POCKET, WRIST, SensorFrame
from .protocol import PACKET_SIZE, SensorPacket, StreamDeframer, decode_packet

REORDER_WINDOW_US = 100_000
STARVATION_S = 0.5
ENGINE_RATE = 30.0


@dataclass
class StreamCounters:
    received: int = 0
    emitted: int = 0
    late: int = 0
    duplicate: int = 0
    missing: int = 0
    malformed: int = 0


class ReorderBuffer:
    """Restores sequence order for one device within a fixed arrival window.

    A packet that continues the sequence is released at once; one that leaves
    a gap waits up to the window for the gap to fill. Packets behind the
    release point are dropped as late (or duplicate).
    """

    def __init__(self, window_us: int = REORDER_WINDOW_US, first_seq: int | None = None):
        self.window_us = window_us
        # None: the first packet seen starts the sequence (replays may begin mid-stream)
        self.next_seq = first_seq
        self.pending: dict[int, tuple[int, SensorPacket]] = {}
        self.counters = StreamCounters()
        self._seen_recent: collections.deque[int] = collections.deque(maxlen=256)

    def push(self, pkt: SensorPacket, arrival_us: int) -> list[SensorPacket]:
        self.counters.received += 1
        if self.next_seq is None:
            self.next_seq = pkt.seq
        if pkt.seq in self.pending or pkt.seq in self._seen_recent:
            self.counters.duplicate += 1
        elif pkt.seq < self.next_seq:
            self.counters.late += 1
        else:
            self.pending[pkt.seq] = (arrival_us, pkt)
        return self.release(arrival_us)

    def release(self, now_us: int) -> list[SensorPacket]:
        out = []
        if self.next_seq is None:
            return out
        while self.pending:
            seq = min(self.pending)
            arrival, pkt = self.pending[seq]
            if seq != self.next_seq and now_us - arrival < self.window_us:
                break
            del self.pending[seq]
            self.counters.missing += seq - self.next_seq
            self.next_seq = seq + 1
            self._seen_recent.append(seq)
            self.counters.emitted += 1
            out.append(pkt)
        return out

    def flush(self) -> list[SensorPacket]:
        return self.release(np.iinfo(np.int64).max)


@dataclass
class AlignedTick:
    index: int
    t: float
    wrist: SensorFrame
    pocket: SensorFrame


class FrameAligner:
    """Zero-order hold of both device streams onto the engine clock.

    Tick ``k`` is at ``t0 + k / rate`` with ``t0`` the first instant both
    devices have reported. A tick is emitted once each device has a sample at
    or after it, or once the other stream runs ``STARVATION_S`` ahead; a
    device whose held sample is older than ``STARVATION_S`` is degraded:
    orientation and pressure are held and acceleration is zeroed.
    """

    def __init__(self, rate: float = ENGINE_RATE, starvation_s: float = STARVATION_S):
        self.dt = 1.0 / rate
        self.starvation_s = starvation_s
        self.queues: dict[int, collections.deque[SensorFrame]] = {WRIST: collections.deque(), POCKET: collections.deque()}
        self.held: dict[int, SensorFrame | None] = {WRIST: None, POCKET: None}
        self.latest_t: dict[int, float] = {WRIST: -np.inf, POCKET: -np.inf}
        self.t0: float | None = None
        self.k = 0
        self.degraded_ticks = 0

    def push(self, frame: SensorFrame) -> list[AlignedTick]:
        dev = frame.device
        if frame.t <= self.latest_t[dev]:
            return []
        self.queues[dev].append(frame)
        self.latest_t[dev] = frame.t
        return self._drain(final=False)

    def finish(self) -> list[AlignedTick]:
        return self._drain(final=True)

    def _tick_time(self) -> float:
        return self.t0 + self.k * self.dt

    def _drain(self, final: bool) -> list[AlignedTick]:
        if self.t0 is None:
            if not (self.queues[WRIST] and self.queues[POCKET]):
                return []
            self.t0 = max(self.queues[WRIST][0].t, self.queues[POCKET][0].t)
        out = []
        horizon = max(self.latest_t.values())
        while True:
            tau = self._tick_time() + 1e-9  # tolerate float drift in the tick clock
            if tau - 2e-9 > horizon:
                break
            ready = True
            for dev in (WRIST, POCKET):
                if self.latest_t[dev] < tau and horizon - tau < self.starvation_s and not final:
                    ready = False
            if not ready:
                break
            frames = {}
            for dev in (WRIST, POCKET):
                q = self.queues[dev]
                while q and q[0].t <= tau:
                    self.held[dev] = q.popleft()
                frames[dev] = self._held_frame(dev, tau)
            out.append(AlignedTick(self.k, self._tick_time(), frames[WRIST], frames[POCKET]))
            self.k += 1
        return out

    def _held_frame(self, dev: int, tau: float) -> SensorFrame:
        h = self.held[dev]
        if h is None:
            # the stream started after t0 would be impossible; keep the first sample
            h = self.queues[dev][0]
        if tau - h.t > self.starvation_s + 2e-9:
            self.degraded_ticks += 1
            return SensorFrame(h.t, np.zeros(3), h.orient, h.pressure, dev, degraded=True)
        return h


class Ingestor:
    """Decode, reorder and align a stream of ``(arrival_us, payload)`` events."""

    def __init__(self, rate: float = ENGINE_RATE, window_us: int = REORDER_WINDOW_US,
                 starvation_s: float = STARVATION_S):
        self.buffers = {WRIST: ReorderBuffer(window_us), POCKET: ReorderBuffer(window_us)}
        self.aligner = FrameAligner(rate, starvation_s)
        self.deframers: dict[object, StreamDeframer] = {}
        self.malformed = 0

    def datagram(self, arrival_us: int, payload: bytes) -> list[AlignedTick]:
        try:
            pkt = decode_packet(payload)
        except (BarotrackError, ValueError):
            self.malformed += 1
            return []
        return self.packet(arrival_us, pkt)

    def stream_bytes(self, arrival_us: int, data: bytes, conn: object = None) -> list[AlignedTick]:
        d = self.deframers.setdefault(conn, StreamDeframer())
        out = []
        for pkt in d.feed(data):
            out += self.packet(arrival_us, pkt)
        return out

    def packet(self, arrival_us: int, pkt: SensorPacket) -> list[AlignedTick]:
        out = []
        for dev, buf in self.buffers.items():
            released = buf.push(pkt, arrival_us) if dev == pkt.device_id else buf.release(arrival_us)
            for p in released:
                out += self.aligner.push(p.to_frame())
        return out

    def finish(self) -> list[AlignedTick]:
        out = []
        for buf in self.buffers.values():
            for p in buf.flush():
                out += self.aligner.push(p.to_frame())
        return out + self.aligner.finish()

    def counters(self) -> dict:
        c = {name: vars(self.buffers[dev].counters) for dev, name in ((WRIST, "wrist"), (POCKET, "pocket"))}
        c["malformed"] = self.malformed + sum(d.rejected for d in self.deframers.values())
        c["degraded_ticks"] = self.aligner.degraded_ticks
        return c


class BoundedQueue:
    """Thread-safe FIFO that drops its oldest item when full (never blocks producers)."""

    def __init__(self, maxsize: int = 64):
        self._q: collections.deque = collections.deque()
        self.maxsize = maxsize
        self.dropped = 0
        self._cv = threading.Condition()
        self.closed = False

    def put(self, item) -> None:
        with self._cv:
            if len(self._q) >= self.maxsize:
                self._q.popleft()
                self.dropped += 1
            self._q.append(item)
            self._cv.notify()

    def get(self, timeout: float | None = None):
        """Next item, or ``None`` once closed and empty (or on timeout)."""
        with self._cv:
            if not self._cv.wait_for(lambda: self._q or self.closed, timeout):
                return None
            return self._q.popleft() if self._q else None

    def close(self) -> None:
        with self._cv:
            self.closed = True
            self._cv.notify_all()

    def __len__(self) -> int:
        return len(self._q)


def parse_endpoint(endpoint: str) -> tuple[str, str, int]:
    """``udp://host:port`` or ``tcp://host:port`` -> (scheme, host, port)."""
    scheme, _, rest = endpoint.partition("://")
    if scheme not in ("udp", "tcp") or ":" not in rest:
        raise ValueError(f"endpoint must look like udp://host:port or tcp://host:port, got {endpoint!r}")
    host, _, port = rest.rpartition(":")
    return scheme, host, int(port)


def now_us() -> int:
    return time.monotonic_ns() // 1000


def receive_events(endpoint: str, stop: threading.Event, timeout: float = 0.2) -> Iterator[tuple[int, bytes, object]]:
    """Yield ``(arrival_us, payload, connection_key)`` from a listening socket.

    Datagram payloads are single packets; stream payloads are raw chunks that
    must go through a deframer (connection key distinguishes clients).
    """
    scheme, host, port = parse_endpoint(endpoint)
    if scheme == "udp":
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.bind((host, port))
        sock.settimeout(timeout)
        try:
            while not stop.is_set():
                try:
                    data, _ = sock.recvfrom(2048)
                except socket.timeout:
                    continue
                yield now_us(), data, None
        finally:
            sock.close()
        return
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(2)
    srv.settimeout(timeout)
    conns: list[socket.socket] = []
    try:
        while not stop.is_set():
            try:
                c, _ = srv.accept()
                c.settimeout(timeout / 4)
                conns.append(c)
            except socket.timeout:
                pass
            for c in list(conns):
                try:
                    data = c.recv(PACKET_SIZE * 64)
                except socket.timeout:
                    continue
                if not data:
                    conns.remove(c)
                    c.close()
                    continue
                yield now_us(), data, c.fileno()
    finally:
        for c in conns:
            c.close()
        srv.close()


def replay_events(events: Iterable[tuple[int, bytes]], ingestor: Ingestor) -> Iterator[AlignedTick]:
    for arrival, payload in events:
        yield from ingestor.datagram(arrival, payload)
    yield from ingestor.finish()


__all__ = [
    "AlignedTick", "BoundedQueue", "FrameAligner", "Ingestor", "ReorderBuffer", "StreamCounters",
    "parse_endpoint", "receive_events", "replay_events",
]
