"""Session recordings: a JSON header followed by an append-only packet log.

Layout (little-endian)::

    magic    4s  b"BTRC"
    version  u16
    hlen     u32 length of the UTF-8 JSON header
    header   hlen bytes: {"devices", "start_time_us", "calibration", "windows", ...}
    record*      u64 arrival time (us), u16 payload length, payload bytes

A truncated final record (e.g. after a crash) is ignored and counted.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator

from ..errors import CorruptFile, VersionMismatch

MAGIC = b"BTRC"
VERSION = 1
_REC = struct.Struct("<QH")


@dataclass
class RecordFile:
    header: dict = field(default_factory=dict)
    events: list[tuple[int, bytes]] = field(default_factory=list)
    truncated_tail: bool = False

    @classmethod
    def read(cls, path: str | Path) -> "RecordFile":
        data = Path(path).read_bytes()
        if len(data) < 10 or data[:4] != MAGIC:
            raise CorruptFile("not a session recording (bad magic)")
        version, hlen = struct.unpack_from("<HI", data, 4)
        if version != VERSION:
            raise VersionMismatch(f"recording version {version}, expected {VERSION}")
        off = 10
        if off + hlen > len(data):
            raise CorruptFile("recording header truncated")
        try:
            header = json.loads(data[off:off + hlen].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptFile(f"recording header unreadable: {exc}") from exc
        off += hlen
        events, truncated = [], False
        while off < len(data):
            if off + _REC.size > len(data):
                truncated = True
                break
            arrival, n = _REC.unpack_from(data, off)
            if off + _REC.size + n > len(data):
                truncated = True
                break
            events.append((arrival, data[off + _REC.size:off + _REC.size + n]))
            off += _REC.size + n
        return cls(header, events, truncated)

    def write(self, path: str | Path) -> None:
        with RecordWriter(path, self.header) as w:
            for arrival, payload in self.events:
                w.append(arrival, payload)


class RecordWriter:
    """Append-only writer; safe to use from the ingestion thread."""

    def __init__(self, path: str | Path, header: dict):
        self._fh: BinaryIO = open(path, "wb")
        hb = json.dumps(header, sort_keys=True).encode()
        self._fh.write(MAGIC + struct.pack("<HI", VERSION, len(hb)) + hb)

    def append(self, arrival_us: int, payload: bytes) -> None:
        self._fh.write(_REC.pack(arrival_us, len(payload)) + payload)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def iter_events(path: str | Path) -> Iterator[tuple[int, bytes]]:
    yield from RecordFile.read(path).events
