"""Bit-exact tensor and checkpoint file formats.

Tensor record: magic b"ICT1", u32 rank, u32 dims (little-endian), then the
raw little-endian float32 payload. Checkpoint: magic b"ICK1", u32 entry
count, then repeated (u32 name length, UTF-8 name, tensor record). Entries
are written sorted by name, so identical contents give identical bytes.
"""
from __future__ import annotations

import os
import struct

import numpy as np

TENSOR_MAGIC = b"ICT1"
CHECKPOINT_MAGIC = b"ICK1"


class FormatError(RuntimeError):
    """Malformed tensor or checkpoint file; message carries the byte offset."""


def tensor_bytes(arr):
    arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float32))
    header = TENSOR_MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.astype("<f4").tobytes()


def _read_exact(buf, offset, n, what):
    if offset + n > len(buf):
        raise FormatError(f"truncated {what} at byte offset {offset} (need {n} bytes)")
    return buf[offset:offset + n], offset + n


def tensor_from_bytes(buf, offset=0):
    magic, offset = _read_exact(buf, offset, 4, "tensor magic")
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r} at byte offset {offset - 4}")
    raw, offset = _read_exact(buf, offset, 4, "tensor rank")
    rank = struct.unpack("<I", raw)[0]
    if rank > 8:
        raise FormatError(f"implausible tensor rank {rank} at byte offset {offset - 4}")
    raw, offset = _read_exact(buf, offset, 4 * rank, "tensor dims")
    dims = struct.unpack(f"<{rank}I", raw) if rank else ()
    count = 1
    for d in dims:
        count *= d
    raw, offset = _read_exact(buf, offset, 4 * count, "tensor payload")
    arr = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
    return arr, offset


def save_tensor(path, arr):
    _atomic_write(path, tensor_bytes(arr))


def load_tensor(path):
    with open(path, "rb") as f:
        buf = f.read()
    arr, offset = tensor_from_bytes(buf)
    if offset != len(buf):
        raise FormatError(f"trailing garbage at byte offset {offset}")
    return arr


def save_checkpoint(path, arrays):
    """Write name -> array entries, sorted by name."""
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(tensor_bytes(arrays[name]))
    _atomic_write(path, b"".join(chunks))


def load_checkpoint(path):
    with open(path, "rb") as f:
        buf = f.read()
    magic, offset = _read_exact(buf, 0, 4, "checkpoint magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r} at byte offset 0")
    raw, offset = _read_exact(buf, offset, 4, "entry count")
    count = struct.unpack("<I", raw)[0]
    arrays = {}
    for _ in range(count):
        raw, offset = _read_exact(buf, offset, 4, "name length")
        nlen = struct.unpack("<I", raw)[0]
        raw, offset = _read_exact(buf, offset, nlen, "name")
        name = raw.decode("utf-8")
        arrays[name], offset = tensor_from_bytes(buf, offset)
    if offset != len(buf):
        raise FormatError(f"trailing garbage at byte offset {offset}")
    return arrays


def _atomic_write(path, data):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
