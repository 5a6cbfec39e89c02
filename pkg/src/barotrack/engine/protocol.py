"""Device wire protocol.

Every packet is a fixed 48-byte little-endian record::

    offset size  field
    0      2     magic 0xB1 0x05
    2      1     version (1)
    3      1     device id (0 wrist watch, 1 pocket phone)
    4      4     sequence number, u32
    8      8     device timestamp in microseconds, u64
    16     12    acceleration x, y, z in the device frame, f32 m/s^2
    28     16    orientation quaternion w, x, y, z (device -> ENU world), f32
    44     4     pressure, f32 hPa

The same records are sent one per datagram (UDP) or back to back on a byte
stream (TCP).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import BadMagic, BadVersion, OutOfRange
from ..sensors import ENU_TO_ENGINE, SensorFrame

MAGIC = b"\xb1\x05"
VERSION = 1
PACKET_SIZE = 48
_FMT = struct.Struct("<2sBBIQ3f4ff")
assert _FMT.size == PACKET_SIZE

QUAT_NORM_BAND = (0.99, 1.01)
PRESSURE_RANGE = (300.0, 1200.0)


@dataclass(frozen=True)
class SensorPacket:
    device_id: int
    seq: int
    timestamp_us: int
    acc: tuple[float, float, float]
    quat: tuple[float, float, float, float]  # w, x, y, z
    pressure: float
    version: int = VERSION

    def rotation(self) -> np.ndarray:
        """Device-to-ENU rotation matrix from the renormalized quaternion."""
        return quat_to_matrix(np.array(self.quat, dtype=float))

    def to_frame(self) -> SensorFrame:
        return SensorFrame(
            t=self.timestamp_us * 1e-6,
            acc=np.array(self.acc, dtype=float),
            orient=ENU_TO_ENGINE @ self.rotation(),
            pressure=float(self.pressure),
            device=self.device_id,
        )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 for a rotation matrix."""
    tr = np.trace(r)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(1.0 + r[i, i] - r[j, j] - r[k, k])
        q = [0.0] * 4
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    q = np.array(q)
    return -q if q[0] < 0 else q


def encode_packet(p: SensorPacket) -> bytes:
    return _FMT.pack(MAGIC, p.version, p.device_id, p.seq, p.timestamp_us, *p.acc, *p.quat, p.pressure)


def decode_packet(data: bytes) -> SensorPacket:
    if len(data) < PACKET_SIZE:
        raise ValueError(f"need {PACKET_SIZE} bytes, got {len(data)}")
    magic, version, dev, seq, ts, ax, ay, az, qw, qx, qy, qz, pressure = _FMT.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic.hex()}")
    if version != VERSION:
        raise BadVersion(f"unsupported protocol version {version}")
    if dev not in (0, 1):
        raise OutOfRange(f"unknown device id {dev}")
    qn = float(np.sqrt(qw * qw + qx * qx + qy * qy + qz * qz))
    if not QUAT_NORM_BAND[0] <= qn <= QUAT_NORM_BAND[1]:
        raise OutOfRange(f"quaternion norm {qn:.4f} outside tolerance")
    if not PRESSURE_RANGE[0] < pressure < PRESSURE_RANGE[1]:
        raise OutOfRange(f"pressure {pressure} hPa outside (300, 1200)")
    if not np.all(np.isfinite([ax, ay, az])):
        raise OutOfRange("non-finite acceleration")
    return SensorPacket(dev, seq, ts, (ax, ay, az), (qw, qx, qy, qz), pressure, version)


def make_packet(device_id: int, seq: int, timestamp_us: int, acc_device: np.ndarray,
                orient_engine: np.ndarray, pressure: float) -> SensorPacket:
    """Build a packet from engine-world quantities (used by simulators and tests)."""
    q = matrix_to_quat(ENU_TO_ENGINE.T @ orient_engine)
    return SensorPacket(device_id, seq, int(timestamp_us), tuple(float(a) for a in acc_device),
                        tuple(float(x) for x in q), float(pressure))


class StreamDeframer:
    """Splits a byte stream into packets, resynchronizing on the magic after corruption."""

    def __init__(self):
        self._buf = bytearray()
        self.resync_bytes = 0
        self.rejected = 0

    def feed(self, data: bytes) -> list[SensorPacket]:
        self._buf += data
        out = []
        while len(self._buf) >= PACKET_SIZE:
            if self._buf[:2] != MAGIC:
                idx = self._buf.find(MAGIC, 1)
                drop = len(self._buf) - 1 if idx < 0 else idx
                del self._buf[:drop]
                self.resync_bytes += drop
                continue
            chunk = bytes(self._buf[:PACKET_SIZE])
            try:
                out.append(decode_packet(chunk))
                del self._buf[:PACKET_SIZE]
            except (BadVersion, OutOfRange):
                self.rejected += 1
                del self._buf[:PACKET_SIZE]
        return out
