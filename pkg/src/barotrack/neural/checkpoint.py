"""Weight checkpoint container.

Layout (all little-endian)::

    magic     4s   b"BTCK"
    version   u16  container version (1)
    layout    u16  feature flattening-order version
    kind      u8   length + ASCII ("pose" / "velocity")
    hidden    u32
    layers    u32
    init_hid  u32  (0 for networks without an init encoder)
    count     u32  number of tensors
    tensor*        u16 name length, ASCII name, u8 ndim, u32 dims..., f32 data
    crc32     u32  over everything before it
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CorruptFile, VersionMismatch
from ..features import FEATURE_LAYOUT_VERSION
from .nets import PoseNet, VelocityNet

MAGIC = b"BTCK"
VERSION = 1


def dumps(net) -> bytes:
    kind = net.kind.encode()
    init_hidden = getattr(net, "init_hidden", 0)
    out = bytearray(MAGIC + struct.pack("<HHB", VERSION, FEATURE_LAYOUT_VERSION, len(kind)) + kind)
    out += struct.pack("<IIII", net.hidden, net.num_layers, init_hidden, len(net.params))
    for name in sorted(net.params):
        arr = np.ascontiguousarray(net.params[name], dtype="<f4")
        nb = name.encode()
        out += struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def loads(data: bytes, dtype=np.float32):
    if len(data) < 12 or data[:4] != MAGIC:
        raise CorruptFile("not a checkpoint (bad magic)")
    version, layout, klen = struct.unpack_from("<HHB", data, 4)
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    if layout != FEATURE_LAYOUT_VERSION:
        raise VersionMismatch(f"checkpoint feature layout {layout}, expected {FEATURE_LAYOUT_VERSION}")
    if zlib.crc32(data[:-4]) != struct.unpack_from("<I", data, len(data) - 4)[0]:
        raise CorruptFile("checkpoint checksum mismatch")
    off = 9
    kind = data[off:off + klen].decode()
    off += klen
    hidden, layers, init_hidden, count = struct.unpack_from("<IIII", data, off)
    off += 16
    if kind == "pose":
        net = PoseNet(hidden, layers, init_hidden, dtype=dtype)
    elif kind == "velocity":
        net = VelocityNet(hidden, layers, dtype=dtype)
    else:
        raise CorruptFile(f"unknown network kind {kind!r}")
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape))
        params[name] = np.frombuffer(data, "<f4", size, off).reshape(shape).astype(dtype)
        off += 4 * size
    if set(params) != set(net.params):
        raise CorruptFile("checkpoint tensors do not match the network layout")
    for k, v in params.items():
        if v.shape != net.params[k].shape:
            raise CorruptFile(f"tensor {k} has shape {v.shape}, expected {net.params[k].shape}")
        net.params[k] = v
    return net


def save(path: str | Path, net) -> None:
    Path(path).write_bytes(dumps(net))


def load(path: str | Path, dtype=np.float32):
    return loads(Path(path).read_bytes(), dtype)
